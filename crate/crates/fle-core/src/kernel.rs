//! Cylinder convolution kernels.
//!
//! In the cylinder variable the operator acts (up to the zero-order constant
//! beta_m) as a convolution against a tilted kernel
//!
//!   K_m(u) = c_m e^{a u} S_m(|u|),
//!   S_m(u) = int_0^pi (sin phi)^{n-2} R_m(cos phi)
//!                    (2 sinh^2(u/2) + 2 sin^2(phi/2))^{-q} d phi,
//!
//! with q = (n + 2s)/2 and tilt a = (n - 2s)/2 - tau0. Near u = 0 the even
//! factor behaves like A u^{-1-2s} (1 + O(u^2)) plus a smooth part; at large
//! u it decays like e^{-(q + m) u}. The normalization c_m is calibrated so
//! that the discrete operator reproduces the multiplier differences on pure
//! exponentials, then cross-validated on held-out exponents.

use crate::error::{FleError, Result};
use crate::grid::{CylinderGrid, GridFunction};
use crate::params::ProblemParams;
use crate::quad::{integrate_segmented, QuadOpts};
use crate::special::{gegenbauer_ratio, log_gamma_real};
use crate::symbol::symbol;
use rayon::prelude::*;

/// Smallest lag at which the kernel can be evaluated directly.
pub const MIN_LAG: f64 = 1e-12;

/// Raw angular factor S_m(u) (no tilt, no calibration).
fn angular_factor(params: &ProblemParams, m: usize, u: f64) -> Result<f64> {
    let n = params.n;
    let q = params.q_exponent();
    let nm2 = (n - 2) as i32;
    let sh = (0.5 * u).sinh();
    let base = 2.0 * sh * sh;
    let integrand = |phi: f64| {
        let sp = (0.5 * phi).sin();
        let den = base + 2.0 * sp * sp;
        phi.sin().powi(nm2) * gegenbauer_ratio(n, m, phi.cos()) * den.powf(-q)
    };
    // geometric panels resolving the u-scale concentration at phi = 0
    let mut breaks = vec![0.0];
    if u < 1.0 {
        let mut b = u / 4.0;
        while b < std::f64::consts::PI {
            breaks.push(b);
            b *= 3.0;
        }
    } else {
        breaks.push(std::f64::consts::PI / 2.0);
    }
    breaks.push(std::f64::consts::PI);
    let opts = QuadOpts {
        abs_tol: 1e-300,
        rel_tol: 1e-11,
        max_depth: 54,
    };
    Ok(integrate_segmented(integrand, &breaks, opts)?.value)
}

/// Raw kernel value at signed lag t: e^{a t} S_m(|t|). Uncalibrated.
/// Lags smaller than `MIN_LAG` in absolute value are rejected.
pub fn kernel_eval(params: &ProblemParams, m: usize, t: f64) -> Result<f64> {
    if t.abs() < MIN_LAG {
        return Err(FleError::OutOfRange {
            reason: format!("kernel lag |t| = {} below the minimum {MIN_LAG}", t.abs()),
        });
    }
    Ok((params.tilt() * t).exp() * angular_factor(params, m, t.abs())?)
}

/// Leading strength of the even factor: S_m(u) ~ A_raw u^{-1-2s} as u -> 0,
/// the same for every mode. Closed form 2^{q-1} G((n-1)/2) G(s+1/2) / G(q).
fn strength_raw(params: &ProblemParams) -> Result<f64> {
    let q = params.q_exponent();
    let lg = (q - 1.0) * std::f64::consts::LN_2
        + log_gamma_real((params.nf() - 1.0) / 2.0)?
        + log_gamma_real(params.s + 0.5)?
        - log_gamma_real(q)?;
    Ok(lg.exp())
}

/// Everything needed to apply the mode-m cylinder operator on a fixed grid.
#[derive(Debug, Clone)]
pub struct KernelTable {
    pub mode: usize,
    pub grid: CylinderGrid,
    /// Calibrated normalization constant c_m.
    pub c: f64,
    /// Zero-order coefficient beta_m = lambda_m(tau0).
    pub beta_m: f64,
    /// Kernel tilt a = (n - 2s)/2 - tau0.
    pub a: f64,
    /// Singularity strength: calibrated S(u) ~ strength u^{-1-2s}.
    pub strength: f64,
    /// Second coefficient of the singular model strength2 u^{1-2s}.
    pub strength2: f64,
    /// Calibrated even factor c S_m(j h) at lattice lags, index j (entry 0 unused).
    pub s_lattice: Vec<f64>,
    /// Calibrated S minus the two-term singular model at lags 0..=6 (entry 0 unused).
    pub s_reg: Vec<f64>,
    /// Far-field amplitude: S(u) ~ kappa e^{-(q+m) u}.
    pub kappa: f64,
    /// Decay exponent of the tilted kernel at positive lags: 2s + tau0 + m.
    pub far_rate_right: f64,
    /// Decay exponent at negative lags: n - tau0 + m.
    pub far_rate_left: f64,
    /// Half-line quadrature weights against g(j h) (entry 0 unused).
    pub weights: Vec<f64>,
    /// Largest relative error over the held-out calibration exponents.
    pub validation_error: f64,
    pub params: ProblemParams,
}

impl KernelTable {
    /// Tilted calibrated kernel value at signed lattice lag j != 0.
    pub fn tilted_at(&self, j: isize) -> f64 {
        let lag = j as f64 * self.grid.h;
        (self.a * lag).exp() * self.s_lattice[j.unsigned_abs()]
    }
}

/// Quadrature weights for int_0^{2T} S(u) g(u) du against lattice samples of
/// an even smooth g with g(0) = 0: a fitted even-polynomial model integrated
/// exactly against the singular part on [0, 6h], Simpson on the regular
/// remainder there, and Simpson against full S on [6h, 2T].
fn half_line_weights(
    grid: &CylinderGrid,
    s: f64,
    s_lattice: &[f64],
    s_reg: &[f64],
    strength: f64,
    strength2: f64,
) -> Vec<f64> {
    let h = grid.h;
    let j_max = grid.steps();
    let w = 6.0 * h;
    let mut weights = vec![0.0; j_max + 1];
    // singular-model moments m_k = int_0^W (A u^{-1-2s} + A2 u^{1-2s}) u^k du, k = 2, 4, 6
    let moment = |k: f64| -> f64 {
        strength * w.powf(k - 2.0 * s) / (k - 2.0 * s)
            + strength2 * w.powf(k + 2.0 - 2.0 * s) / (k + 2.0 - 2.0 * s)
    };
    let m = [moment(2.0), moment(4.0), moment(6.0)];
    // solve V^T mu = m where V maps (c2, c4, c6) to g at lags 2h, 4h, 6h
    let x = [(2.0 * h) * (2.0 * h), (4.0 * h) * (4.0 * h), (6.0 * h) * (6.0 * h)];
    let mut v = nalgebra::Matrix3::zeros();
    for (r, xr) in x.iter().enumerate() {
        v[(r, 0)] = *xr;
        v[(r, 1)] = xr * xr;
        v[(r, 2)] = xr * xr * xr;
    }
    let mvec = nalgebra::Vector3::new(m[0], m[1], m[2]);
    let mu = v
        .transpose()
        .lu()
        .solve(&mvec)
        .expect("even Vandermonde is invertible");
    weights[2] += mu[0];
    weights[4] += mu[1];
    weights[6] += mu[2];
    // Simpson on the regular remainder over [0, 6h]
    let simpson6 = [1.0, 4.0, 2.0, 4.0, 2.0, 4.0, 1.0];
    for j in 1..=6 {
        weights[j] += (h / 3.0) * simpson6[j] * s_reg[j];
    }
    // Simpson against the full even factor over [6h, 2T]
    for j in 6..=j_max {
        let c = if j == 6 || j == j_max {
            1.0
        } else if (j - 6) % 2 == 1 {
            4.0
        } else {
            2.0
        };
        weights[j] += (h / 3.0) * c * s_lattice[j];
    }
    weights
}

/// Build the mode-m kernel table on a grid, calibrating the normalization
/// against the multiplier on one exponential and validating on held-out
/// exponents to the stated tolerance.
pub fn calibrate(params: &ProblemParams, m: usize, grid: &CylinderGrid) -> Result<KernelTable> {
    calibrate_with_tol(params, m, grid, 1e-5)
}

pub fn calibrate_with_tol(
    params: &ProblemParams,
    m: usize,
    grid: &CylinderGrid,
    tol: f64,
) -> Result<KernelTable> {
    let h = grid.h;
    let j_max = grid.steps();
    let s = params.s;
    let tau0 = params.tau0();
    let beta_m = symbol(params, m, tau0)?;
    let a = params.tilt();
    // raw lattice values of the even factor, in parallel (independent entries)
    let mut s_raw = vec![0.0; j_max + 1];
    let computed: Result<Vec<(usize, f64)>> = (1..=j_max)
        .into_par_iter()
        .map(|j| Ok((j, angular_factor(params, m, j as f64 * h)?)))
        .collect();
    for (j, v) in computed? {
        s_raw[j] = v;
    }
    let a_raw = strength_raw(params)?;
    // second model coefficient from one small-lag sample of u^{1+2s} S(u)
    let u0 = h / 4.0;
    let omega0 = u0.powf(1.0 + 2.0 * s) * angular_factor(params, m, u0)?;
    let a2_raw = (omega0 - a_raw) / (u0 * u0);
    let model = |u: f64| a_raw * u.powf(-1.0 - 2.0 * s) + a2_raw * u.powf(1.0 - 2.0 * s);
    let mut s_reg_raw = vec![0.0; 7];
    for j in 1..=6 {
        let u = j as f64 * h;
        s_reg_raw[j] = s_raw[j] - model(u);
    }
    // far amplitude anchored at the last lattice lag with the known rate
    let b_far = params.q_exponent() + m as f64;
    let kappa_raw = s_raw[j_max] * (b_far * (j_max as f64) * h).exp();

    let weights_raw = half_line_weights(grid, s, &s_raw, &s_reg_raw, a_raw, a2_raw);
    let mut table = KernelTable {
        mode: m,
        grid: *grid,
        c: 1.0,
        beta_m,
        a,
        strength: a_raw,
        strength2: a2_raw,
        s_lattice: s_raw,
        s_reg: s_reg_raw,
        kappa: kappa_raw,
        far_rate_right: 2.0 * s + tau0 + m as f64,
        far_rate_left: params.nf() - tau0 + m as f64,
        weights: weights_raw,
        validation_error: f64::NAN,
        params: *params,
    };
    // calibration exponent and held-out validation exponents, all inside the
    // admissibility strip (-(2s + tau0 + m), n - tau0 + m)
    let reach_neg = (2.0 * s + tau0 + m as f64).min(2.0);
    let reach_pos = (params.nf() - tau0 + m as f64).min(2.0);
    let alpha1 = 0.40 * reach_pos;
    let validation = [
        -0.50 * reach_neg,
        0.22 * reach_pos,
        0.65 * reach_pos,
        -0.25 * reach_neg,
    ];
    let d_target = |alpha: f64| -> Result<f64> {
        Ok(symbol(params, m, alpha + tau0)? - beta_m)
    };
    let d1 = discrete_exponential_response(&table, alpha1)?;
    let target1 = d_target(alpha1)?;
    if d1.abs() < 1e-300 {
        return Err(FleError::CalibrationFailure {
            mode: m,
            alpha: alpha1,
            rel_err: f64::INFINITY,
            tol,
        });
    }
    let c = target1 / d1;
    table.c = c;
    for v in table.s_lattice.iter_mut() {
        *v *= c;
    }
    for v in table.s_reg.iter_mut() {
        *v *= c;
    }
    for v in table.weights.iter_mut() {
        *v *= c;
    }
    table.strength *= c;
    table.strength2 *= c;
    table.kappa *= c;
    // held-out validation
    let mut worst = 0.0f64;
    for alpha in validation {
        let want = d_target(alpha)?;
        let got = discrete_exponential_response(&table, alpha)?;
        let rel = (got - want).abs() / want.abs().max(1e-12);
        worst = worst.max(rel);
        if rel > tol {
            return Err(FleError::CalibrationFailure {
                mode: m,
                alpha,
                rel_err: rel,
                tol,
            });
        }
    }
    table.validation_error = worst;
    Ok(table)
}

/// Discrete response of the convolution part on e^{alpha t}: the quadrature
/// approximation of lambda_m(alpha + tau0) - lambda_m(tau0), measured at
/// several interior nodes (they agree to rounding for exact exponentials;
/// the median guards the edges).
pub fn discrete_exponential_response(table: &KernelTable, alpha: f64) -> Result<f64> {
    let grid = &table.grid;
    let v = GridFunction::exponential(*grid, alpha);
    let raw = crate::operator::apply_convolution(table, &v)?;
    let j = grid.steps();
    let mut samples: Vec<f64> = [j / 4, j / 2, 3 * j / 4]
        .iter()
        .map(|&i| raw.values[i] / (alpha * grid.node(i)).exp())
        .collect();
    samples.sort_by(|x, y| x.partial_cmp(y).expect("finite responses"));
    Ok(samples[1])
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reference() -> ProblemParams {
        ProblemParams::new(3, 0.5, 3.0).unwrap()
    }

    #[test]
    fn angular_factor_closed_forms() {
        // at (3, 1/2): S_0(u) = 2 / sinh^2 u and
        // S_1(u) = 2 cosh u / sinh^2 u + 2 ln tanh(u/2)
        let p = reference();
        for u in [0.5f64, 1.0, 2.0] {
            let s0 = angular_factor(&p, 0, u).unwrap();
            let want0 = 2.0 / (u.sinh() * u.sinh());
            assert_relative_eq!(s0, want0, max_relative = 1e-10);
            let s1 = angular_factor(&p, 1, u).unwrap();
            let want1 = 2.0 * u.cosh() / (u.sinh() * u.sinh()) + 2.0 * (0.5 * u).tanh().ln();
            assert_relative_eq!(s1, want1, max_relative = 1e-9);
        }
    }

    #[test]
    fn angular_factor_frozen_values() {
        let p = reference();
        let cases = [
            (0usize, 0.5, 7.365_388_753_662_338_6),
            (1, 0.5, 5.491_745_374_974_126_0),
            (0, 1.0, 1.448_123_321_932_620_9),
            (1, 1.0, 0.690_697_389_087_938_89),
            (0, 2.0, 0.152_043_659_676_142_2),
            (1, 2.0, 0.027_335_063_466_505_16),
        ];
        for (m, u, want) in cases {
            assert_relative_eq!(
                angular_factor(&p, m, u).unwrap(),
                want,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn kernel_eval_includes_tilt_and_rejects_tiny_lag() {
        let p = reference();
        let k_pos = kernel_eval(&p, 0, 1.0).unwrap();
        let k_neg = kernel_eval(&p, 0, -1.0).unwrap();
        let s0 = angular_factor(&p, 0, 1.0).unwrap();
        assert_relative_eq!(k_pos, (0.5f64).exp() * s0, max_relative = 1e-12);
        assert_relative_eq!(k_neg, (-0.5f64).exp() * s0, max_relative = 1e-12);
        assert!(kernel_eval(&p, 0, 1e-13).is_err());
    }

    #[test]
    fn strength_matches_small_lag_asymptote() {
        let p = ProblemParams::new(4, 0.75, 3.0).unwrap();
        let a = strength_raw(&p).unwrap();
        let u = 1e-4;
        let s_val = angular_factor(&p, 0, u).unwrap();
        assert_relative_eq!(s_val, a * u.powf(-2.5), max_relative = 1e-6);
    }

    #[test]
    fn near_origin_power_law_exponent() {
        let p = reference();
        // S(u) ~ A u^{-2} at s = 1/2: ratio test across a decade
        let s1 = angular_factor(&p, 0, 1e-3).unwrap();
        let s2 = angular_factor(&p, 0, 1e-2).unwrap();
        let slope = (s1 / s2).ln() / (10.0f64).ln();
        assert_relative_eq!(slope, 2.0, max_relative = 1e-4);
    }
}
