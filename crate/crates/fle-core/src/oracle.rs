//! Direct hypersingular-integral evaluation of the fractional Laplacian on
//! zonal profiles. This is the slow reference route: it never touches the
//! gamma-function multiplier, so agreement between the two is a genuine
//! cross-check of both.

use crate::error::{FleError, Result};
use crate::params::ProblemParams;
use crate::quad::{integrate_segmented, QuadOpts};
use crate::special::{gegenbauer_ratio, sphere_area};
use crate::symbol;

fn shell_opts() -> QuadOpts {
    QuadOpts {
        abs_tol: 1e-280,
        rel_tol: 1e-11,
        max_depth: 40,
    }
}

fn radial_opts() -> QuadOpts {
    QuadOpts {
        abs_tol: 1e-300,
        rel_tol: 1e-9,
        max_depth: 40,
    }
}

/// Sort, clamp to the open interval (lo, hi), and deduplicate breakpoints,
/// keeping the mandatory endpoints.
fn assemble_breaks(lo: f64, hi: f64, interior: &[f64]) -> Vec<f64> {
    let mut b: Vec<f64> = interior
        .iter()
        .copied()
        .filter(|v| *v > lo && *v < hi)
        .collect();
    b.push(lo);
    b.push(hi);
    b.sort_by(|p, q| p.partial_cmp(q).expect("finite breakpoints"));
    b.dedup_by(|p, q| (*p - *q).abs() <= 1e-14 * hi.abs().max(1.0));
    b
}

/// Spherical mean of f(|y|) R_m(y/|y| . e1) over the sphere |y - x e1| = rho,
/// integrated in the distance w = |y| instead of the polar angle. Splitting at
/// the midpoint and substituting w^2 = delta^2 + u^2 on the near half and
/// w^2 = l^2 - v^2 on the far half absorbs both Jacobian endpoint factors for
/// every dimension, so nothing concentrates as rho approaches x. The
/// remaining features are f itself near w = delta, resolved by a geometric
/// panel chain, and any radii in `f_breaks` where f loses smoothness, mapped
/// to explicit panel edges.
fn shell_integral<F: Fn(f64) -> f64>(
    n: usize,
    m: usize,
    f: &F,
    x: f64,
    rho: f64,
    f_breaks: &[f64],
) -> Result<f64> {
    let delta = (x - rho).abs();
    let l = x + rho;
    let span = 4.0 * x * rho; // l^2 - delta^2
    let half_pow = (n as f64 - 3.0) / 2.0;
    let np = n as i32 - 2;
    let x2r2 = x * x - rho * rho;
    let zonal = |w: f64| {
        let zarg = ((x2r2 + w * w) / (2.0 * x * w)).clamp(-1.0, 1.0);
        gegenbauer_ratio(n, m, zarg)
    };
    // both halves run over [0, sqrt(2 x rho)]
    let edge = (2.0 * x * rho).sqrt();
    let near = |u: f64| {
        let w = (delta * delta + u * u).sqrt();
        u.powi(np) * (span - u * u).powf(half_pow) * f(w) * zonal(w)
    };
    let far = |v: f64| {
        let w = (l * l - v * v).sqrt();
        v.powi(np) * (span - v * v).powf(half_pow) * f(w) * zonal(w)
    };
    // geometric chain toward u = 0 where f(w ~ delta) may vary fastest
    let mut near_breaks = vec![edge];
    let floor = delta.max(edge * 1e-13);
    let mut b = edge / 3.0;
    while b > floor {
        near_breaks.push(b);
        b /= 3.0;
    }
    near_breaks.push(0.0);
    let mut far_breaks = vec![0.0, edge];
    for w_b in f_breaks {
        if *w_b <= delta || *w_b >= l {
            continue;
        }
        let u2 = w_b * w_b - delta * delta;
        if u2 < 2.0 * x * rho {
            near_breaks.push(u2.sqrt());
        } else {
            far_breaks.push((l * l - w_b * w_b).sqrt());
        }
    }
    let near_breaks = assemble_breaks(0.0, edge, &near_breaks);
    let far_breaks = assemble_breaks(0.0, edge, &far_breaks);
    let near_int = integrate_segmented(near, &near_breaks, shell_opts())?;
    let far_int = integrate_segmented(far, &far_breaks, shell_opts())?;
    let norm = sphere_area(n - 1)? / ((2.0 * x * rho).powi(n as i32 - 3) * x * rho);
    Ok(norm * (near_int.value + far_int.value))
}

/// (-Delta)^s applied to the zonal profile f(|y|) R_m(y/|y| . e1), evaluated
/// at the point x e1, by the symmetrized difference representation
///
///   C(n,s) * int_0^inf rho^{-1-2s} [ f(x) |S^{n-1}| - I(rho) ] d rho
///
/// with I the spherical mean over the shell of radius rho. The radial factor
/// f must keep the outer integral absolutely convergent: bounded near
/// infinity growth slower than rho^{2s}, and an integrable shell mean.
pub fn fl_apply_zonal<F: Fn(f64) -> f64>(
    params: &ProblemParams,
    m: usize,
    f: &F,
    x: f64,
) -> Result<f64> {
    fl_apply_zonal_with_breaks(params, m, f, x, &[])
}

/// Same as [`fl_apply_zonal`] for profiles with known non-smooth radii (for
/// example a support edge): every shell and radial panel is aligned to them,
/// which the adaptive quadrature cannot afford to discover on its own.
pub fn fl_apply_zonal_with_breaks<F: Fn(f64) -> f64>(
    params: &ProblemParams,
    m: usize,
    f: &F,
    x: f64,
    f_breaks: &[f64],
) -> Result<f64> {
    if !(x > 0.0) {
        return Err(FleError::OutOfRange {
            reason: format!("evaluation radius must be positive, got {x}"),
        });
    }
    let n = params.n;
    let s = params.s;
    let center = f(x) * sphere_area(n)?;
    let diff = |rho: f64| -> f64 {
        // shell integral failures surface as NaN and poison the quadrature
        match shell_integral(n, m, f, x, rho, f_breaks) {
            Ok(v) => rho.powf(-1.0 - 2.0 * s) * (center - v),
            Err(_) => f64::NAN,
        }
    };
    // the shell mean has limited smoothness in rho at the diagonal rho = x
    // and wherever the shell touches a non-smooth radius of f, so refine
    // geometrically into the diagonal and align panels to the touch radii
    let mut breaks = vec![x / 8.0, x / 2.0];
    for k in 2..=30 {
        breaks.push(x * (1.0 - 2f64.powi(-k)));
    }
    breaks.push(x);
    for k in 1..=30 {
        breaks.push(x * (1.0 + 2f64.powi(-k)));
    }
    breaks.push(2.0 * x);
    for r_b in f_breaks {
        breaks.push((r_b - x).abs());
        breaks.push(r_b + x);
    }
    let breaks = assemble_breaks(0.0, 8.0 * x, &breaks);
    let body = integrate_segmented(&diff, &breaks, radial_opts())?;
    // far field via rho = 8x / zeta, zeta in (0, 1]
    let tail_integrand = |zeta: f64| {
        let rho = 8.0 * x / zeta;
        diff(rho) * 8.0 * x / (zeta * zeta)
    };
    let mut tail_breaks = Vec::new();
    for r_b in f_breaks {
        if r_b + x > 8.0 * x {
            tail_breaks.push(8.0 * x / (r_b + x));
        }
        if (r_b - x).abs() > 8.0 * x {
            tail_breaks.push(8.0 * x / (r_b - x).abs());
        }
    }
    let tail_breaks = assemble_breaks(0.0, 1.0, &tail_breaks);
    let tail = integrate_segmented(tail_integrand, &tail_breaks, radial_opts())?;
    let consts = symbol::compute_constants(params)?;
    Ok(consts.fl_norm * (body.value + tail.value))
}

/// Reference evaluation of the power-profile multiplier: applies the operator
/// to r^{-tau} times a degree-m zonal harmonic at radius x and strips the
/// exact power factor, so the return value approximates the multiplier
/// lambda_m(tau) and is independent of x.
///
/// Admissible range: 0 < tau < n - 1 (shell means stay integrable).
pub fn fl_oracle(params: &ProblemParams, m: usize, tau: f64, x: f64) -> Result<f64> {
    let n = params.nf();
    if !(tau > 0.0 && tau < n - 1.0) {
        return Err(FleError::OutOfRange {
            reason: format!(
                "oracle needs 0 < tau < n - 1 = {}, got tau = {tau}",
                n - 1.0
            ),
        });
    }
    let f = move |r: f64| r.powf(-tau);
    let raw = fl_apply_zonal(params, m, &f, x)?;
    Ok(raw / x.powf(-tau - 2.0 * params.s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn oracle_matches_multiplier_mode0() {
        let params = ProblemParams::new(3, 0.5, 3.0).unwrap();
        let want = symbol::symbol(&params, 0, 0.5).unwrap();
        let got = fl_oracle(&params, 0, 0.5, 1.0).unwrap();
        assert_relative_eq!(got, want, max_relative = 1e-7);
    }

    #[test]
    fn oracle_scale_invariance() {
        let params = ProblemParams::new(3, 0.5, 3.0).unwrap();
        let a = fl_oracle(&params, 1, 1.2, 0.7).unwrap();
        let b = fl_oracle(&params, 1, 1.2, 1.9).unwrap();
        assert_relative_eq!(a, b, max_relative = 1e-7);
    }

    #[test]
    fn oracle_rejects_bad_tau() {
        let params = ProblemParams::new(3, 0.5, 3.0).unwrap();
        assert!(fl_oracle(&params, 0, -0.2, 1.0).is_err());
        assert!(fl_oracle(&params, 0, 2.5, 1.0).is_err());
    }
}
