use thiserror::Error;

/// Errors surfaced by the numerical layers.
///
/// Every failure mode carries enough context to reconstruct the offending
/// call: parameter values, the quantity that went out of range, and the
/// admissible range where one exists.
#[derive(Debug, Clone, Error)]
pub enum FleError {
    #[error("gamma pole at z = {z} (nonpositive integer argument)")]
    GammaPole { z: f64 },

    #[error("symbol argument re(tau) = {tau} within {eps} of a pole or zero of the gamma factors; conditioning is lost")]
    SymbolNearPole { tau: f64, eps: f64 },

    #[error("invalid parameters: {reason}")]
    InvalidParams { reason: String },

    #[error("invalid grid: {reason}")]
    InvalidGrid { reason: String },

    #[error("quadrature failed to converge on [{a}, {b}]: error estimate {err:.3e} exceeds tolerance {tol:.3e}")]
    QuadratureFailure { a: f64, b: f64, err: f64, tol: f64 },

    #[error("calibration validation failed for mode {mode}: exponent {alpha} reproduced with relative error {rel_err:.3e} (tolerance {tol:.3e})")]
    CalibrationFailure {
        mode: usize,
        alpha: f64,
        rel_err: f64,
        tol: f64,
    },

    #[error("root finding failed: {reason}")]
    RootFindFailure { reason: String },

    #[error("iteration did not converge after {iters} steps: {reason} (last residual {residual:.3e})")]
    NoConvergence {
        iters: usize,
        reason: String,
        residual: f64,
    },

    #[error("linear solve failed: {reason}")]
    SingularSystem { reason: String },

    #[error(
        "mode-1 problem is not solvable: right-hand side has component {component:.3e} \
         along the translation kernel (threshold {threshold:.3e}) and p = {p} is below \
         the mode-1 decay threshold {p_threshold}"
    )]
    Solvability {
        component: f64,
        threshold: f64,
        p: f64,
        p_threshold: f64,
    },

    #[error("argument out of range: {reason}")]
    OutOfRange { reason: String },

    #[error(
        "fixed-point iterate left the contraction ball at lambda = {lambda}: \
         |phi|_* = {norm:.3e} exceeds rho = {radius:.3e}; retry with a smaller lambda"
    )]
    LambdaTooLarge {
        lambda: f64,
        norm: f64,
        radius: f64,
    },
}

pub type Result<T> = std::result::Result<T, FleError>;
