//! Problem parameters and the derived exponents used throughout.

use crate::error::{FleError, Result};
use serde::{Deserialize, Serialize};

/// Dimension, fractional order, and nonlinearity exponent.
///
/// Invariants enforced at construction: `n >= 2` (the angular reductions need
/// a genuine sphere), `s` strictly inside (0, 1), `n > 2s`, and `p` strictly
/// above the critical exponent `(n + 2s) / (n - 2s)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProblemParams {
    pub n: usize,
    pub s: f64,
    pub p: f64,
}

impl ProblemParams {
    pub fn new(n: usize, s: f64, p: f64) -> Result<Self> {
        if n < 2 {
            return Err(FleError::InvalidParams {
                reason: format!("dimension n = {n} must be at least 2"),
            });
        }
        if !(s > 0.0 && s < 1.0) || !s.is_finite() {
            return Err(FleError::InvalidParams {
                reason: format!("fractional order s = {s} must lie strictly in (0, 1)"),
            });
        }
        let nf = n as f64;
        if nf <= 2.0 * s {
            return Err(FleError::InvalidParams {
                reason: format!("need n > 2s, got n = {n}, s = {s}"),
            });
        }
        let pc = (nf + 2.0 * s) / (nf - 2.0 * s);
        if !(p > pc) || !p.is_finite() {
            return Err(FleError::InvalidParams {
                reason: format!(
                    "exponent p = {p} must exceed the critical exponent {pc} for n = {n}, s = {s}"
                ),
            });
        }
        Ok(ProblemParams { n, s, p })
    }

    pub fn nf(&self) -> f64 {
        self.n as f64
    }

    /// Critical exponent (n + 2s) / (n - 2s).
    pub fn critical_exponent(&self) -> f64 {
        (self.nf() + 2.0 * self.s) / (self.nf() - 2.0 * self.s)
    }

    /// Decay exponent of the singular profile: tau0 = 2s / (p - 1).
    pub fn tau0(&self) -> f64 {
        2.0 * self.s / (self.p - 1.0)
    }

    /// Tilt of the cylinder kernel: a = (n - 2s)/2 - tau0. Supercriticality
    /// makes this strictly positive.
    pub fn tilt(&self) -> f64 {
        (self.nf() - 2.0 * self.s) / 2.0 - self.tau0()
    }

    /// Exponent q = (n + 2s)/2 governing the angular kernel.
    pub fn q_exponent(&self) -> f64 {
        (self.nf() + 2.0 * self.s) / 2.0
    }

    /// Threshold exponent below which the mode-1 translation kernel is
    /// admissible and right-hand sides must be orthogonal to it. Requires
    /// n - 2s > 1; otherwise there is no finite threshold.
    pub fn mode1_threshold(&self) -> Option<f64> {
        let d = self.nf() - 2.0 * self.s - 1.0;
        if d > 0.0 {
            Some((self.nf() + 2.0 * self.s - 1.0) / d)
        } else {
            None
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_parameters_accepted() {
        let p = ProblemParams::new(3, 0.5, 3.0).unwrap();
        assert_relative_eq!(p.tau0(), 0.5);
        assert_relative_eq!(p.tilt(), 0.5);
        assert_relative_eq!(p.q_exponent(), 2.0);
        assert_relative_eq!(p.critical_exponent(), 2.0);
        assert_relative_eq!(p.mode1_threshold().unwrap(), 3.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(ProblemParams::new(1, 0.5, 3.0).is_err());
        assert!(ProblemParams::new(3, 0.0, 3.0).is_err());
        assert!(ProblemParams::new(3, 1.0, 3.0).is_err());
        assert!(ProblemParams::new(3, 0.5, 2.0).is_err()); // critical, not super
        assert!(ProblemParams::new(3, 0.5, 1.5).is_err());
        assert!(ProblemParams::new(4, 0.75, 2.2).is_err()); // critical for (4, 3/4)
        assert!(ProblemParams::new(4, 0.75, 2.21).is_ok());
    }

    #[test]
    fn second_set_derived_values() {
        let p = ProblemParams::new(4, 0.75, 3.0).unwrap();
        assert_relative_eq!(p.tau0(), 0.75);
        assert_relative_eq!(p.tilt(), 1.25 - 0.75);
        assert_relative_eq!(p.q_exponent(), 2.75);
    }

    #[test]
    fn threshold_absent_in_thin_dimensions() {
        // n - 2s < 1: no finite mode-1 threshold
        let p = ProblemParams::new(2, 0.9, 20.0).unwrap();
        assert!(p.mode1_threshold().is_none());
    }
}
