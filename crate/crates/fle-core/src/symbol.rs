//! The Mellin multiplier of the fractional Laplacian on power-law profiles.
//!
//! For a profile r^{-tau} times a degree-m spherical harmonic, the fractional
//! Laplacian acts as multiplication by
//!
//!   lambda_m(tau) = 2^{2s} G((m + tau + 2s)/2) G((n + m - tau)/2)
//!                   / [ G((m + tau)/2) G((n + m - tau - 2s)/2) ]
//!
//! with G the gamma function. The multiplier is symmetric about
//! tau = (n - 2s)/2 and vanishes at tau = -m and tau = n + m - 2s.

use crate::error::{FleError, Result};
use crate::params::ProblemParams;
use crate::special::{log_abs_gamma_sign, log_gamma};
use num_complex::Complex64;
use serde::Serialize;

/// Distance (in tau) to a gamma pole below which evaluation is refused.
pub const POLE_EPS: f64 = 1e-8;

fn near_nonpositive_integer(x: f64, eps: f64) -> bool {
    x < eps && (x - x.round()).abs() < eps
}

/// Multiplier lambda_m(tau) for real tau.
///
/// Zeros coming from denominator gamma poles are returned as exact 0; tau
/// within `POLE_EPS` of a numerator pole (or of a simultaneous pole/zero
/// collision) is rejected as ill-conditioned.
pub fn symbol(params: &ProblemParams, m: usize, tau: f64) -> Result<f64> {
    let n = params.nf();
    let s = params.s;
    let mf = m as f64;
    let a1 = (mf + tau + 2.0 * s) / 2.0;
    let a2 = (n + mf - tau) / 2.0;
    let b1 = (mf + tau) / 2.0;
    let b2 = (n + mf - tau - 2.0 * s) / 2.0;
    // gamma-argument spacing is tau/2, so half the tau tolerance
    let eps = POLE_EPS / 2.0;
    let num_pole = near_nonpositive_integer(a1, eps) || near_nonpositive_integer(a2, eps);
    let den_pole = near_nonpositive_integer(b1, eps) || near_nonpositive_integer(b2, eps);
    if num_pole {
        return Err(FleError::SymbolNearPole {
            tau,
            eps: POLE_EPS,
        });
    }
    if den_pole {
        // a pole downstairs is a zero of the multiplier
        return Ok(0.0);
    }
    let (l1, s1) = log_abs_gamma_sign(a1)?;
    let (l2, s2) = log_abs_gamma_sign(a2)?;
    let (l3, s3) = log_abs_gamma_sign(b1)?;
    let (l4, s4) = log_abs_gamma_sign(b2)?;
    let sign = (s1 * s2 * s3 * s4) as f64;
    Ok(sign * (2.0 * s * std::f64::consts::LN_2 + l1 + l2 - l3 - l4).exp())
}

/// Multiplier at complex tau (needed along the critical line, where the
/// symmetry tau <-> n - 2s - tau makes the value real).
pub fn symbol_complex(params: &ProblemParams, m: usize, tau: Complex64) -> Result<Complex64> {
    if tau.im == 0.0 {
        return symbol(params, m, tau.re).map(|v| Complex64::new(v, 0.0));
    }
    let n = params.nf();
    let s = params.s;
    let mf = m as f64;
    let a1 = (Complex64::new(mf + 2.0 * s, 0.0) + tau) / 2.0;
    let a2 = (Complex64::new(n + mf, 0.0) - tau) / 2.0;
    let b1 = (Complex64::new(mf, 0.0) + tau) / 2.0;
    let b2 = (Complex64::new(n + mf - 2.0 * s, 0.0) - tau) / 2.0;
    let lg = log_gamma(a1)? + log_gamma(a2)? - log_gamma(b1)? - log_gamma(b2)?;
    Ok((lg + 2.0 * s * std::f64::consts::LN_2).exp())
}

/// Spectral constants attached to a parameter triple.
#[derive(Debug, Clone, Serialize)]
pub struct SpectralConstants {
    /// Multiplier at tau0; the singular profile amplitude is beta^{1/(p-1)}.
    pub beta: f64,
    /// Normalization of the boundary-to-interior extension; negative in (0,1).
    pub ds: f64,
    /// Sharp fractional Hardy constant: the multiplier at (n - 2s)/2.
    pub hardy: f64,
    /// Constant in the hypersingular integral representation.
    pub fl_norm: f64,
    /// True when p * beta <= hardy (no oscillation at the singular profile).
    pub stable: bool,
    /// Joseph-Lundgren-type exponent: the p at which p * beta crosses hardy,
    /// when that crossing exists in (critical, 1e3].
    pub p_jl: Option<f64>,
    /// Decay exponent 2s / (p - 1), repeated here for convenience.
    pub tau0: f64,
}

fn beta_of_p(n: usize, s: f64, p: f64) -> Result<f64> {
    let params = ProblemParams { n, s, p };
    symbol(&params, 0, 2.0 * s / (p - 1.0))
}

fn find_p_jl(n: usize, s: f64) -> Result<Option<f64>> {
    let nf = n as f64;
    let pc = (nf + 2.0 * s) / (nf - 2.0 * s);
    let params_any = ProblemParams {
        n,
        s,
        p: pc + 1.0,
    };
    let hardy = symbol(&params_any, 0, (nf - 2.0 * s) / 2.0)?;
    let g = |p: f64| -> Result<f64> { Ok(p * beta_of_p(n, s, p)? - hardy) };
    let mut lo = pc * (1.0 + 1e-8);
    let mut hi = 1e3;
    let glo = g(lo)?;
    let ghi = g(hi)?;
    if glo <= 0.0 || ghi >= 0.0 {
        // p * beta starts above hardy just past critical; no crossing means
        // the oscillatory regime covers the whole admissible range
        return Ok(None);
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(Some(0.5 * (lo + hi)))
}

/// All spectral constants for a parameter triple. Pure: same inputs give
/// bit-identical outputs.
pub fn compute_constants(params: &ProblemParams) -> Result<SpectralConstants> {
    let n = params.nf();
    let s = params.s;
    let tau0 = params.tau0();
    let beta = symbol(params, 0, tau0)?;
    let hardy = symbol(params, 0, (n - 2.0 * s) / 2.0)?;
    // ds = 2^{2s-1} Gamma(s) / (s Gamma(-s)); Gamma(-s) < 0 for s in (0,1)
    let (lgs, sg1) = log_abs_gamma_sign(s)?;
    let (lgms, sg2) = log_abs_gamma_sign(-s)?;
    let ds = (sg1 * sg2) as f64 * ((2.0 * s - 1.0) * std::f64::consts::LN_2 + lgs - lgms).exp() / s;
    // fl_norm = 4^s s Gamma(n/2 + s) / (pi^{n/2} Gamma(1 - s))
    let (lg_a, _) = log_abs_gamma_sign(n / 2.0 + s)?;
    let (lg_b, _) = log_abs_gamma_sign(1.0 - s)?;
    let fl_norm = s
        * (2.0 * s * std::f64::consts::LN_2 + lg_a
            - lg_b
            - (n / 2.0) * std::f64::consts::PI.ln())
        .exp();
    let stable = params.p * beta <= hardy;
    let p_jl = find_p_jl(params.n, s)?;
    Ok(SpectralConstants {
        beta,
        ds,
        hardy,
        fl_norm,
        stable,
        p_jl,
        tau0,
    })
}
