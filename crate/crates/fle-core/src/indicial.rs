//! Characteristic exponents of the linearization at the singular profile.
//!
//! Profiles r^{-gamma} E_m solve the linearized equation exactly when the
//! multiplier satisfies lambda_m(gamma) = p * beta. On the real axis the
//! multiplier rises from a zero at gamma = -m to its peak at the symmetry
//! point (n - 2s)/2 and falls back to a zero at gamma = n + m - 2s; along
//! the vertical line through the peak it is real and increases without bound.
//! The level p * beta therefore meets the symbol either in a real pair
//! symmetric about the peak (level below the peak value) or in a conjugate
//! complex pair on the symmetry line (level above it). The complex case is
//! what makes the profile wind around the singular solution.

use crate::error::{FleError, Result};
use crate::params::ProblemParams;
use crate::symbol::{symbol, symbol_complex, SpectralConstants};
use num_complex::Complex64;
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SingularRoots {
    /// Real exponents gamma_-, gamma_+ with gamma_- + gamma_+ = n - 2s.
    Real { lower: f64, upper: f64 },
    /// Conjugate pair (n - 2s)/2 +/- i y.
    Complex { real: f64, imag: f64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct IndicialReport {
    pub mode: usize,
    /// Peak of the mode-m multiplier over the real axis (its value at the
    /// symmetry point); the mode-m sharp constant.
    pub eigenvalue: f64,
    /// The level p * beta that the roots solve for.
    pub level: f64,
    /// Exponents of the mode-m profiles annihilated by the plain operator:
    /// r^{-tau} with tau = n + m - 2s (singular) and tau = -m (regular).
    pub roots_at_zero: (f64, f64),
    /// Exponents at the singular profile: solutions of
    /// lambda_m(gamma) = p * beta.
    pub roots_at_infinity: SingularRoots,
}

fn bisect_real(params: &ProblemParams, m: usize, level: f64) -> Result<f64> {
    let center = (params.nf() - 2.0 * params.s) / 2.0;
    let upper_zero = params.nf() + m as f64 - 2.0 * params.s;
    let mut lo = center;
    let mut hi = upper_zero - 1e-9;
    let f = |g: f64| -> Result<f64> { Ok(symbol(params, m, g)? - level) };
    if f(lo)? < 0.0 || f(hi)? > 0.0 {
        return Err(FleError::RootFindFailure {
            reason: format!("real root bracket failed for mode {m} at level {level}"),
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn bisect_imag(params: &ProblemParams, m: usize, level: f64) -> Result<f64> {
    let center = (params.nf() - 2.0 * params.s) / 2.0;
    let f = |y: f64| -> Result<f64> {
        Ok(symbol_complex(params, m, Complex64::new(center, y))?.re - level)
    };
    let mut hi = 1.0;
    while f(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 512.0 {
            return Err(FleError::RootFindFailure {
                reason: format!("imaginary root bracket failed for mode {m} at level {level}"),
            });
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Characteristic exponents for mode m at the singular profile.
pub fn indicial_roots(
    params: &ProblemParams,
    consts: &SpectralConstants,
    m: usize,
) -> Result<IndicialReport> {
    let center = (params.nf() - 2.0 * params.s) / 2.0;
    let eigenvalue = symbol(params, m, center)?;
    let level = params.p * consts.beta;
    let roots_at_infinity = if (level - eigenvalue).abs() < 1e-13 {
        SingularRoots::Real {
            lower: center,
            upper: center,
        }
    } else if level < eigenvalue {
        let upper = bisect_real(params, m, level)?;
        SingularRoots::Real {
            lower: params.nf() - 2.0 * params.s - upper,
            upper,
        }
    } else {
        let y = bisect_imag(params, m, level)?;
        SingularRoots::Complex { real: center, imag: y }
    };
    Ok(IndicialReport {
        mode: m,
        eigenvalue,
        level,
        roots_at_zero: (params.nf() + m as f64 - 2.0 * params.s, -(m as f64)),
        roots_at_infinity,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::symbol::compute_constants;
    use approx::assert_relative_eq;

    #[test]
    fn reference_mode0_is_oscillatory() {
        let params = ProblemParams::new(3, 0.5, 3.0).unwrap();
        let consts = compute_constants(&params).unwrap();
        let rep = indicial_roots(&params, &consts, 0).unwrap();
        assert_relative_eq!(rep.eigenvalue, 2.0 / std::f64::consts::PI, max_relative = 1e-13);
        assert_relative_eq!(rep.level, 1.5, max_relative = 1e-13);
        assert_eq!(rep.roots_at_zero, (2.0, 0.0));
        match rep.roots_at_infinity {
            SingularRoots::Complex { real, imag } => {
                assert_relative_eq!(real, 1.0, max_relative = 1e-13);
                // frozen against an independent multiprecision root solve
                assert_relative_eq!(imag, 1.470_743_857_250_029_3, max_relative = 1e-10);
            }
            _ => panic!("expected complex pair at the reference parameters"),
        }
    }

    #[test]
    fn reference_mode1_exact_real_pair() {
        // translation invariance pins the mode-1 roots at tau0 + 1 and its mirror
        let params = ProblemParams::new(3, 0.5, 3.0).unwrap();
        let consts = compute_constants(&params).unwrap();
        let rep = indicial_roots(&params, &consts, 1).unwrap();
        match rep.roots_at_infinity {
            SingularRoots::Real { lower, upper } => {
                assert_relative_eq!(upper, 1.5, max_relative = 1e-10);
                assert_relative_eq!(lower, 0.5, max_relative = 1e-9);
            }
            _ => panic!("mode 1 must have real roots at the reference parameters"),
        }
    }

    #[test]
    fn mode2_real_roots_solve_level_equation() {
        let params = ProblemParams::new(3, 0.5, 3.0).unwrap();
        let consts = compute_constants(&params).unwrap();
        let rep = indicial_roots(&params, &consts, 2).unwrap();
        match rep.roots_at_infinity {
            SingularRoots::Real { lower, upper } => {
                assert_relative_eq!(symbol(&params, 2, upper).unwrap(), 1.5, max_relative = 1e-9);
                assert_relative_eq!(symbol(&params, 2, lower).unwrap(), 1.5, max_relative = 1e-9);
                assert_relative_eq!(lower + upper, 2.0, max_relative = 1e-12);
            }
            _ => panic!("mode 2 sits above the level and must be real"),
        }
    }

    #[test]
    fn stable_parameters_give_real_mode0() {
        let params = ProblemParams::new(12, 0.5, 2.5).unwrap();
        let consts = compute_constants(&params).unwrap();
        assert!(consts.stable);
        let rep = indicial_roots(&params, &consts, 0).unwrap();
        assert!(matches!(rep.roots_at_infinity, SingularRoots::Real { .. }));
    }
}
