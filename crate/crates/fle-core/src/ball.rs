//! The Dirichlet problem on the unit ball through its Green integral
//! operator: minimal solutions by monotone iteration, pseudo-arclength
//! continuation around the fold, and the blow-up rescaling that turns a
//! large-norm branch state into a first approximation of the entire profile.
//!
//! The radial problem is posed as the fixed-point equation w = lambda T(w)
//! with T(w) = G[(1 + w)^p], where G is the angularly reduced Green operator
//! of (-Delta)^s with zero exterior condition. The overall constant of the
//! Green kernel is not transcribed from anywhere: it is calibrated against
//! the closed-form torsion function, which in turn is certified by the
//! hypersingular oracle in the test suite. A transcription error in either
//! route would show up as a mismatch between them.

use crate::error::{FleError, Result};
use crate::fit::{fit_exp_decay, Pchip};
use crate::grid::{BallGrid, CylinderGrid, GridFunction, TailModel};
use crate::params::ProblemParams;
use crate::quad::{integrate_segmented, QuadOpts, WGK, XGK};
use crate::special::{betainc_reg, log_beta, log_gamma_real, sphere_area};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

/// Picard iterates above this sup-norm are treated as divergent.
pub const DEFAULT_SUP_CEILING: f64 = 1e6;

/// Incomplete radial factor of the ball Green kernel,
///
///   F(q) = int_0^q t^{s-1} (1 + t)^{-n/2} dt,
///
/// expressed through the regularized incomplete beta function. For q > 1 the
/// complement form is used so that the beta argument never rounds into 1.
pub(crate) struct GreenFactor {
    a: f64,
    b: f64,
    full: f64,
}

impl GreenFactor {
    fn new(params: &ProblemParams) -> Result<Self> {
        let a = params.s;
        let b = 0.5 * params.nf() - params.s;
        Ok(GreenFactor {
            a,
            b,
            full: log_beta(a, b)?.exp(),
        })
    }

    fn eval(&self, q: f64) -> Result<f64> {
        if q <= 0.0 {
            return Ok(0.0);
        }
        let v = if q > 1.0 {
            1.0 - betainc_reg(self.b, self.a, 1.0 / (1.0 + q))?
        } else {
            betainc_reg(self.a, self.b, q / (1.0 + q))?
        };
        Ok(self.full * v)
    }
}

/// Angular average of the (uncalibrated) Green kernel between the axis point
/// at radius r and the sphere of radius rho:
///
///   J(r, rho) = int_0^pi (sin th)^{n-2} W^{2s-n} F(r0) dth,
///   W^2 = (r - rho)^2 + 4 r rho sin^2(th/2),
///   r0  = (1 - r^2)(1 - rho^2) / W^2.
///
/// Integrated in the distance w = W instead of the angle: splitting at the
/// midpoint and substituting w^2 = delta^2 + u^2 (near half) and
/// w^2 = l^2 - v^2 (far half) absorbs the Jacobian endpoint factors in every
/// dimension, so nothing concentrates as rho approaches r. Symmetric in
/// (r, rho) by construction.
pub(crate) fn angular_green(
    params: &ProblemParams,
    factor: &GreenFactor,
    r: f64,
    rho: f64,
) -> Result<f64> {
    let boundary = (1.0 - r * r) * (1.0 - rho * rho);
    if boundary <= 0.0 {
        return Ok(0.0);
    }
    let n = params.n;
    let exponent = params.s - 0.5 * params.nf();
    if r < 1e-14 {
        // on-axis target: W = rho for every angle
        let w2 = rho * rho;
        let f = factor.eval(boundary / w2)?;
        let full_angle = sphere_area(n)? / sphere_area(n - 1)?;
        return Ok(full_angle * w2.powf(exponent) * f);
    }
    let g = |w2: f64| -> f64 {
        match factor.eval(boundary / w2) {
            Ok(v) => w2.powf(exponent) * v,
            Err(_) => f64::NAN,
        }
    };
    let delta = (r - rho).abs();
    let span = 4.0 * r * rho;
    let l = r + rho;
    let half_pow = (n as f64 - 3.0) / 2.0;
    let np = n as i32 - 2;
    let near = |u: f64| u.powi(np) * (span - u * u).powf(half_pow) * g(delta * delta + u * u);
    let far = |v: f64| v.powi(np) * (span - v * v).powf(half_pow) * g(l * l - v * v);
    let edge = (2.0 * r * rho).sqrt();
    let mut breaks = vec![edge];
    let floor = delta.max(edge * 1e-13);
    let mut b = edge / 3.0;
    while b > floor {
        breaks.push(b);
        b /= 3.0;
    }
    breaks.push(0.0);
    breaks.reverse();
    let opts = QuadOpts {
        abs_tol: 1e-280,
        rel_tol: 1e-8,
        max_depth: 40,
    };
    let near_int = integrate_segmented(near, &breaks, opts)?;
    let far_int = integrate_segmented(far, &[0.0, edge], opts)?;
    let norm = (2.0 * r * rho).powi(n as i32 - 3) * r * rho;
    Ok((near_int.value + far_int.value) / norm)
}

/// Subcell chain for one mesh cell, geometrically refined toward the endpoint
/// that carries the kernel concentration. `levels = 0` leaves the cell whole.
fn dyadic_cells(a: f64, b: f64, toward_left: bool, levels: usize) -> Vec<(f64, f64)> {
    if levels == 0 {
        return vec![(a, b)];
    }
    let w = b - a;
    let mut cells = Vec::with_capacity(levels + 1);
    if toward_left {
        let mut hi = a + w * 2f64.powi(-(levels as i32));
        cells.push((a, hi));
        for j in (0..levels).rev() {
            let next = a + w * 2f64.powi(-(j as i32));
            cells.push((hi, next));
            hi = next;
        }
    } else {
        let mut lo = a;
        for j in 0..levels {
            let next = b - w * 2f64.powi(-((j + 1) as i32));
            cells.push((lo, next));
            lo = next;
        }
        cells.push((lo, b));
    }
    cells
}

/// 15-point Gauss-Kronrod evaluation of kernel times both linear hat
/// functions of the cell [cell_a, cell_b], over the subinterval [a, b].
/// One kernel evaluation serves both moments.
fn gk15_hat_pair<K: Fn(f64) -> f64>(
    kernel: &K,
    a: f64,
    b: f64,
    cell_a: f64,
    cell_b: f64,
) -> (f64, f64) {
    let hl = 0.5 * (b - a);
    let center = 0.5 * (a + b);
    let inv = 1.0 / (cell_b - cell_a);
    let mut left = 0.0;
    let mut right = 0.0;
    let mut add = |x: f64, wgt: f64| {
        let kv = kernel(x);
        let frac = ((x - cell_a) * inv).clamp(0.0, 1.0);
        left += wgt * kv * (1.0 - frac);
        right += wgt * kv * frac;
    };
    add(center, WGK[7]);
    for j in 0..7 {
        let dx = hl * XGK[j];
        add(center - dx, WGK[j]);
        add(center + dx, WGK[j]);
    }
    (left * hl, right * hl)
}

/// Quadrature weights of one operator row: the target sits at radius r (a
/// mesh node or the origin) and the density is taken piecewise linear on the
/// mesh, flat on the innermost segment [0, rho_0]. Cells whose endpoint
/// carries the diagonal singularity get a deep dyadic chain; neighbours a
/// shallow one.
fn green_row(params: &ProblemParams, factor: &GreenFactor, grid: &BallGrid, r: f64) -> Result<Vec<f64>> {
    let nodes = &grid.nodes;
    let n_nodes = nodes.len();
    let s_ang = sphere_area(params.n - 1)?;
    let dim_pow = params.n as i32 - 1;
    let kernel = |rho: f64| -> f64 {
        match angular_green(params, factor, r, rho) {
            Ok(j) => s_ang * rho.powi(dim_pow) * j,
            Err(_) => f64::NAN,
        }
    };
    let mut w = vec![0.0f64; n_nodes];
    let mut add_cell = |a: f64, b: f64, il: Option<usize>, ir: usize| -> Result<()> {
        // concentration endpoint and refinement depth from the distance to r
        let width = b - a;
        let (levels, toward_left) = if r <= a {
            let d = a - r;
            if d == 0.0 {
                (18, true)
            } else if d < 2.0 * width {
                (8, true)
            } else {
                (0, true)
            }
        } else if r >= b {
            let d = r - b;
            if d == 0.0 {
                (18, false)
            } else if d < 2.0 * width {
                (8, false)
            } else {
                (0, false)
            }
        } else {
            // r strictly inside can only happen for the origin row when
            // r = 0 < rho_0; treat like a left concentration
            (18, true)
        };
        // the boundary cell sees the (1 - rho)^s edge of the kernel
        let (levels, toward_left) = if b >= 1.0 && levels < 6 {
            (6, false)
        } else {
            (levels, toward_left)
        };
        let mut acc_l = 0.0;
        let mut acc_r = 0.0;
        for (sa, sb) in dyadic_cells(a, b, toward_left, levels) {
            let (vl, vr) = gk15_hat_pair(&kernel, sa, sb, a, b);
            acc_l += vl;
            acc_r += vr;
        }
        if !(acc_l.is_finite() && acc_r.is_finite()) {
            return Err(FleError::QuadratureFailure {
                a,
                b,
                err: f64::NAN,
                tol: 0.0,
            });
        }
        if let Some(il) = il {
            w[il] += acc_l;
        } else {
            // innermost segment: flat density attributed to the first node
            w[ir] += acc_l;
        }
        w[ir] += acc_r;
        Ok(())
    };
    add_cell(0.0, nodes[0], None, 0)?;
    for l in 0..n_nodes - 1 {
        add_cell(nodes[l], nodes[l + 1], Some(l), l + 1)?;
    }
    Ok(w)
}

/// Dense angularly reduced Green operator on a radial mesh, together with a
/// dedicated row for the origin (where the sup-norm of radially decreasing
/// solutions lives). `weights` row k applies the operator at node r_k to a
/// density sampled on the mesh.
#[derive(Debug, Clone)]
pub struct RadialGreenOperator {
    pub grid: BallGrid,
    pub weights: DMatrix<f64>,
    pub row_origin: DVector<f64>,
    /// Overall kernel constant fixed by the torsion calibration.
    pub green_const: f64,
    /// Largest relative torsion deviation over mesh rows with r <= 0.9.
    pub torsion_rel_err: f64,
    /// Relative torsion deviation of the origin row, which is excluded from
    /// the calibration and therefore an independent check.
    pub origin_rel_err: f64,
    pub params: ProblemParams,
}

/// Amplitude of the closed-form torsion function: the unit-source Dirichlet
/// solution on the ball is gamma_{n,s} (1 - r^2)^s with
///
///   gamma_{n,s} = 4^{-s} Gamma(n/2) / (Gamma(n/2 + s) Gamma(1 + s)).
pub fn torsion_amplitude(params: &ProblemParams) -> Result<f64> {
    let half_n = 0.5 * params.nf();
    let log = -params.s * 4f64.ln() + log_gamma_real(half_n)?
        - log_gamma_real(half_n + params.s)?
        - log_gamma_real(1.0 + params.s)?;
    Ok(log.exp())
}

/// Assemble the Green operator on the mesh. Rows are independent and built in
/// parallel; the result does not depend on the thread count.
pub fn build_green(params: &ProblemParams, grid: &BallGrid) -> Result<RadialGreenOperator> {
    let factor = GreenFactor::new(params)?;
    let n = grid.len();
    let rows: Vec<Result<Vec<f64>>> = (0..n)
        .into_par_iter()
        .map(|k| green_row(params, &factor, grid, grid.nodes[k]))
        .collect();
    let mut weights = DMatrix::zeros(n, n);
    for (k, row) in rows.into_iter().enumerate() {
        let row = row?;
        for (l, v) in row.into_iter().enumerate() {
            weights[(k, l)] = v;
        }
    }
    let row_origin = DVector::from_vec(green_row(params, &factor, grid, 0.0)?);

    // calibration: least squares of the raw torsion samples against the
    // closed form, origin row deliberately excluded
    let gamma = torsion_amplitude(params)?;
    let exact: Vec<f64> = grid
        .nodes
        .iter()
        .map(|r| gamma * (1.0 - r * r).powf(params.s))
        .collect();
    let raw: Vec<f64> = (0..n).map(|k| weights.row(k).sum()).collect();
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..n {
        num += raw[k] * exact[k];
        den += raw[k] * raw[k];
    }
    if !(den > 0.0) {
        return Err(FleError::SingularSystem {
            reason: "raw Green rows vanish; calibration impossible".into(),
        });
    }
    let c = num / den;
    let weights = weights * c;
    let row_origin = row_origin * c;
    let mut torsion_rel_err = 0.0f64;
    for k in 0..n {
        if grid.nodes[k] <= 0.9 {
            torsion_rel_err = torsion_rel_err.max((c * raw[k] - exact[k]).abs() / exact[k]);
        }
    }
    let origin_rel_err = (row_origin.sum() - gamma).abs() / gamma;
    Ok(RadialGreenOperator {
        grid: grid.clone(),
        weights,
        row_origin,
        green_const: c,
        torsion_rel_err,
        origin_rel_err,
        params: params.clone(),
    })
}

impl RadialGreenOperator {
    /// Apply the operator to a density sampled on the mesh.
    pub fn apply(&self, f: &DVector<f64>) -> DVector<f64> {
        &self.weights * f
    }

    /// Operator value at the origin for the same density.
    pub fn apply_origin(&self, f: &DVector<f64>) -> f64 {
        self.row_origin.dot(f)
    }
}

/// One point on the Dirichlet solution branch.
#[derive(Debug, Clone, Serialize)]
pub struct BranchState {
    pub lambda: f64,
    /// Solution samples on the mesh nodes.
    pub w: Vec<f64>,
    /// Value at the origin, which is the maximum for these radially
    /// non-increasing solutions.
    pub sup_norm: f64,
    /// Cumulative pseudo-arclength along the branch (0 for Picard starts).
    pub arc_length: f64,
}

fn nonlinearity(p: f64, w: &DVector<f64>) -> DVector<f64> {
    w.map(|x| (1.0 + x).powf(p))
}

fn make_state(op: &RadialGreenOperator, lambda: f64, w: &DVector<f64>, arc: f64) -> BranchState {
    let g = nonlinearity(op.params.p, w);
    BranchState {
        lambda,
        w: w.iter().copied().collect(),
        sup_norm: lambda * op.row_origin.dot(&g),
        arc_length: arc,
    }
}

/// Minimal solution of w = lambda G[(1 + w)^p] by Picard iteration from 0.
/// The iterates increase monotonically; divergence past the ceiling signals
/// lambda beyond the fold.
pub fn minimal_branch(op: &RadialGreenOperator, lambda: f64) -> Result<BranchState> {
    minimal_branch_with_ceiling(op, lambda, DEFAULT_SUP_CEILING)
}

pub fn minimal_branch_with_ceiling(
    op: &RadialGreenOperator,
    lambda: f64,
    ceiling: f64,
) -> Result<BranchState> {
    if !(lambda >= 0.0) {
        return Err(FleError::OutOfRange {
            reason: format!("minimal branch needs lambda >= 0, got {lambda}"),
        });
    }
    let n = op.grid.len();
    let mut w = DVector::zeros(n);
    if lambda == 0.0 {
        return Ok(make_state(op, lambda, &w, 0.0));
    }
    let mut last_diff = f64::INFINITY;
    for it in 0..10_000 {
        let next = lambda * (&op.weights * nonlinearity(op.params.p, &w));
        last_diff = (&next - &w).amax();
        w = next;
        let sup = w.amax();
        if !sup.is_finite() || sup > ceiling {
            return Err(FleError::NoConvergence {
                iters: it + 1,
                reason: format!(
                    "Picard iteration diverged (sup {sup:.3e} > ceiling {ceiling:.3e}); \
                     lambda = {lambda} lies beyond the minimal branch"
                ),
                residual: last_diff,
            });
        }
        if last_diff <= 1e-10 * (1.0 + sup) {
            return Ok(make_state(op, lambda, &w, 0.0));
        }
    }
    Err(FleError::NoConvergence {
        iters: 10_000,
        reason: format!("Picard iteration stalled at lambda = {lambda} (close to the fold?)"),
        residual: last_diff,
    })
}

/// Branch continuation output: sampled states, the rounded fold location,
/// and how often the lambda-direction of travel flipped.
#[derive(Debug, Clone, Serialize)]
pub struct Continuation {
    pub states: Vec<BranchState>,
    pub fold_lambda: Option<f64>,
    pub fold_arc_length: Option<f64>,
    pub sign_changes: usize,
}

struct BranchSystem<'a> {
    op: &'a RadialGreenOperator,
}

impl BranchSystem<'_> {
    fn residual(&self, w: &DVector<f64>, lambda: f64) -> DVector<f64> {
        w - lambda * (&self.op.weights * nonlinearity(self.op.params.p, w))
    }

    /// Jacobian w.r.t. w and the lambda-derivative column.
    fn jacobian(&self, w: &DVector<f64>, lambda: f64) -> (DMatrix<f64>, DVector<f64>) {
        let p = self.op.params.p;
        let n = w.len();
        let gp = w.map(|x| p * (1.0 + x).powf(p - 1.0));
        let mut jac = -lambda * &self.op.weights;
        for i in 0..n {
            for j in 0..n {
                jac[(i, j)] *= gp[j];
            }
            jac[(i, i)] += 1.0;
        }
        let f_lambda = -(&self.op.weights * nonlinearity(p, w));
        (jac, f_lambda)
    }
}

/// Weighted tangent metric: |dw|^2 / (N (1 + |w|_inf)^2) + dlambda^2. Keeps
/// steps meaningful both near the fold (w = O(1)) and far up the branch.
fn metric_scale(n: usize, w: &DVector<f64>) -> f64 {
    1.0 / (n as f64 * (1.0 + w.amax()).powi(2))
}

fn solve_bordered(
    jac: &DMatrix<f64>,
    f_lambda: &DVector<f64>,
    bot_w: &DVector<f64>,
    bot_lambda: f64,
    rhs_top: &DVector<f64>,
    rhs_bot: f64,
) -> Result<(DVector<f64>, f64)> {
    let n = jac.nrows();
    let mut m = DMatrix::zeros(n + 1, n + 1);
    m.view_mut((0, 0), (n, n)).copy_from(jac);
    for i in 0..n {
        m[(i, n)] = f_lambda[i];
        m[(n, i)] = bot_w[i];
    }
    m[(n, n)] = bot_lambda;
    let mut rhs = DVector::zeros(n + 1);
    rhs.rows_mut(0, n).copy_from(rhs_top);
    rhs[n] = rhs_bot;
    let sol = m.lu().solve(&rhs).ok_or_else(|| FleError::SingularSystem {
        reason: "bordered continuation matrix is singular".into(),
    })?;
    Ok((sol.rows(0, n).into_owned(), sol[n]))
}

fn branch_tangent(
    sys: &BranchSystem,
    w: &DVector<f64>,
    lambda: f64,
    prev: Option<&(DVector<f64>, f64)>,
) -> Result<(DVector<f64>, f64)> {
    let n = w.len();
    let (jac, f_lambda) = sys.jacobian(w, lambda);
    let scale = metric_scale(n, w);
    let (bot_w, bot_lambda) = match prev {
        Some((tw, tl)) => (scale * tw, *tl),
        None => (DVector::zeros(n), 1.0),
    };
    let (tw, tl) = solve_bordered(
        &jac,
        &f_lambda,
        &bot_w,
        bot_lambda,
        &DVector::zeros(n),
        1.0,
    )?;
    let norm = (scale * tw.norm_squared() + tl * tl).sqrt();
    if !(norm > 0.0) {
        return Err(FleError::SingularSystem {
            reason: "degenerate branch tangent".into(),
        });
    }
    Ok((tw / norm, tl / norm))
}

/// Quadratic fit of lambda(arc) through three states; the stationary point
/// rounds the fold.
fn round_fold(a: &BranchState, b: &BranchState, c: &BranchState) -> Option<(f64, f64)> {
    let (x0, y0) = (a.arc_length, a.lambda);
    let (x1, y1) = (b.arc_length, b.lambda);
    let (x2, y2) = (c.arc_length, c.lambda);
    let d1 = (y1 - y0) / (x1 - x0);
    let d2 = (y2 - y1) / (x2 - x1);
    let curv = (d2 - d1) / (x2 - x0);
    if curv.abs() < 1e-300 {
        return None;
    }
    let s_v = 0.5 * (x0 + x1) - d1 / (2.0 * curv);
    let lam = y0 + d1 * (s_v - x0) + curv * (s_v - x0) * (s_v - x1);
    Some((lam, s_v))
}

/// Pseudo-arclength continuation of the discrete branch equation
/// w - lambda G[(1 + w)^p] = 0 from `start` until the sup-norm reaches
/// `target_sup`. Newton corrector with a bordered system; fold locations are
/// rounded by a quadratic fit around each sign change of dlambda/ds.
pub fn continue_branch(
    op: &RadialGreenOperator,
    start: &BranchState,
    target_sup: f64,
) -> Result<Continuation> {
    let sys = BranchSystem { op };
    let n = op.grid.len();
    let newton_tol = 5e-10;
    let mut w = DVector::from_vec(start.w.clone());
    let mut lambda = start.lambda;

    // polish the start state to the Newton tolerance
    for _ in 0..30 {
        let res = sys.residual(&w, lambda);
        if res.amax() <= newton_tol {
            break;
        }
        let (jac, _) = sys.jacobian(&w, lambda);
        let delta = jac.lu().solve(&res).ok_or_else(|| FleError::SingularSystem {
            reason: "Jacobian singular while polishing the start state".into(),
        })?;
        w -= delta;
    }

    let mut arc = start.arc_length;
    let mut states = vec![make_state(op, lambda, &w, arc)];
    let mut tangent = branch_tangent(&sys, &w, lambda, None)?;
    if tangent.1 < 0.0 {
        tangent = (-tangent.0, -tangent.1);
    }
    let mut ds = 0.05f64;
    let ds_min = 1e-9;
    let ds_max = 0.5;
    let mut fold_lambda = None;
    let mut fold_arc = None;
    let mut sign_changes = 0usize;
    let mut pending_fold_fit = false;

    for _step in 0..20_000 {
        if states.last().expect("nonempty").sup_norm >= target_sup {
            return Ok(Continuation {
                states,
                fold_lambda,
                fold_arc_length: fold_arc,
                sign_changes,
            });
        }
        // keep steps short while the branch turns
        let ds_eff = if tangent.1.abs() < 0.1 { ds.min(0.1) } else { ds };
        let w_pred = &w + ds_eff * &tangent.0;
        let lambda_pred = lambda + ds_eff * tangent.1;
        let mut wi = w_pred.clone();
        let mut li = lambda_pred;
        let scale = metric_scale(n, &w);
        let mut converged = false;
        for _it in 0..12 {
            if wi.min() < -0.9 || !li.is_finite() {
                break;
            }
            let res = sys.residual(&wi, li);
            let plane =
                scale * tangent.0.dot(&(&wi - &w_pred)) + tangent.1 * (li - lambda_pred);
            if res.amax() <= newton_tol && plane.abs() <= 1e-12 * (1.0 + li.abs()) {
                converged = true;
                break;
            }
            let (jac, f_lambda) = sys.jacobian(&wi, li);
            let (dw, dl) = match solve_bordered(
                &jac,
                &f_lambda,
                &(scale * &tangent.0),
                tangent.1,
                &(-res),
                -plane,
            ) {
                Ok(v) => v,
                Err(_) => break,
            };
            wi += dw;
            li += dl;
        }
        if converged && wi.min() > -1e-9 && li > 0.0 {
            // accepted step
            w = wi;
            lambda = li;
            arc += ds_eff;
            states.push(make_state(op, lambda, &w, arc));
            let new_tangent = branch_tangent(&sys, &w, lambda, Some(&tangent))?;
            if new_tangent.1.signum() != tangent.1.signum() && new_tangent.1 != 0.0 {
                sign_changes += 1;
                if fold_lambda.is_none() {
                    let k = states.len() - 1;
                    if k >= 2 {
                        if let Some((lam, sv)) =
                            round_fold(&states[k - 2], &states[k - 1], &states[k])
                        {
                            fold_lambda = Some(lam);
                            fold_arc = Some(sv);
                        }
                    } else {
                        pending_fold_fit = true;
                    }
                }
            } else if pending_fold_fit && states.len() >= 3 {
                let k = states.len() - 1;
                if let Some((lam, sv)) = round_fold(&states[k - 2], &states[k - 1], &states[k]) {
                    fold_lambda = Some(lam);
                    fold_arc = Some(sv);
                }
                pending_fold_fit = false;
            }
            tangent = new_tangent;
            ds = (ds * 1.4).min(ds_max);
        } else {
            ds *= 0.5;
            if ds < ds_min {
                return Err(FleError::NoConvergence {
                    iters: states.len(),
                    reason: format!(
                        "continuation stalled at lambda = {lambda:.6e}, sup = {:.3e} \
                         (step underflow)",
                        states.last().expect("nonempty").sup_norm
                    ),
                    residual: ds,
                });
            }
        }
    }
    Err(FleError::NoConvergence {
        iters: states.len(),
        reason: "continuation exceeded the step budget".into(),
        residual: ds,
    })
}

/// Blow-up rescaling of a large-norm branch state into cylinder coordinates.
///
/// With m = w(0) and the zoom factor sigma = (lambda m^{p-1})^{-1/(2s)}, the
/// function W(x) = w(sigma x) / m solves (-Delta)^s W = (W + 1/m)^p with
/// W(0) = 1 exactly; it is the natural first approximation of the entire
/// profile once m is large. The returned grid function stores W(e^{-t}) on
/// the cylinder lattice: flat tail toward value 1 on the right (r -> 0) and
/// the pure power continuation A e^{tau0 t} on the left, anchored where the
/// ball data ends.
pub fn blow_up_rescale(
    params: &ProblemParams,
    grid: &BallGrid,
    state: &BranchState,
    target: &CylinderGrid,
) -> Result<GridFunction> {
    if !(state.sup_norm >= 100.0) {
        return Err(FleError::OutOfRange {
            reason: format!(
                "blow-up rescaling needs sup-norm >= 100, got {:.3e}; follow the branch further",
                state.sup_norm
            ),
        });
    }
    let m = state.sup_norm;
    let tau0 = params.tau0();
    let sigma = (state.lambda * m.powf(params.p - 1.0)).powf(-0.5 / params.s);
    let mut xs = Vec::with_capacity(grid.len() + 1);
    let mut ys = Vec::with_capacity(grid.len() + 1);
    xs.push(0.0);
    ys.push(m);
    for (r, v) in grid.nodes.iter().zip(state.w.iter()) {
        xs.push(*r);
        ys.push(*v);
    }
    let interp = Pchip::new(xs, ys)?;
    // keep only cylinder nodes with r = sigma e^{-t} <= e^{-3}: clear of the
    // Dirichlet boundary layer of the ball problem
    let t_cut = sigma.ln() + 3.0;
    if t_cut > 0.0 {
        return Err(FleError::OutOfRange {
            reason: format!(
                "rescaled data covers t >= {t_cut:.2} only; sup-norm too small for this window"
            ),
        });
    }
    let profile_at = |t: f64| interp.eval(sigma * (-t).exp()) / m;
    // power-law continuation anchored at the first kept node
    let mut anchor = None;
    for t in target.nodes() {
        if t >= t_cut {
            anchor = Some((t, profile_at(t)));
            break;
        }
    }
    let (t_a, v_a) = anchor.ok_or_else(|| FleError::InvalidGrid {
        reason: "cylinder window lies entirely left of the rescaled data".into(),
    })?;
    let amp = v_a * (-tau0 * t_a).exp();
    let values: Vec<f64> = target
        .nodes()
        .map(|t| {
            if t >= t_cut {
                profile_at(t)
            } else {
                amp * (tau0 * t).exp()
            }
        })
        .collect();
    let left = TailModel {
        limit: 0.0,
        rate: tau0,
        amplitude: values[0],
    };
    // approach to the origin value 1: fitted decay rate, anchored amplitude
    let n_win = (target.len() / 8).max(8).min(target.len());
    let start = target.len() - n_win;
    let ts: Vec<f64> = (start..target.len()).map(|i| target.node(i)).collect();
    let dev: Vec<f64> = (start..target.len()).map(|i| 1.0 - values[i]).collect();
    let rate = if dev.iter().all(|d| *d > 0.0) {
        match fit_exp_decay(&ts, &dev) {
            Ok((_, r)) if r > 0.05 * params.s && r < 20.0 => r,
            _ => 2.0 * params.s,
        }
    } else {
        2.0 * params.s
    };
    let right = TailModel {
        limit: 1.0,
        rate,
        amplitude: values[target.len() - 1] - 1.0,
    };
    GridFunction::new(target.clone(), values, left, right)
}
