//! Numerics for the supercritical fractional Lane-Emden equation
//! (-Delta)^s u = u^p and its Schrodinger-type perturbations.
//!
//! The crate covers: Mellin multipliers and spectral constants, a direct
//! hypersingular-integral oracle, characteristic exponents, calibrated
//! cylinder convolution kernels with a matching discrete operator, the
//! Green operator of the unit ball with branch continuation and blow-up
//! rescaling, the entire radial profile solver, the linearized operator in
//! weighted spaces, and a fixed-point construction of bound states under
//! small potentials.

pub mod ball;
pub mod entire;
pub mod error;
pub mod fit;
pub mod grid;
pub mod indicial;
pub mod kernel;
pub mod linearized;
pub mod operator;
pub mod oracle;
pub mod params;
pub mod quad;
pub mod special;
pub mod symbol;

pub use ball::{
    blow_up_rescale, build_green, continue_branch, minimal_branch, BranchState, Continuation,
    RadialGreenOperator,
};
pub use entire::{
    hamiltonian_boundary, overlap_disagreement, profile_to_v, sigmoid_init, solve_entire,
    to_physical, verify_asymptotics, AsymptoticsReport, EntireSolution, PhysicalProfile,
};
pub use error::{FleError, Result};
pub use grid::{BallGrid, CylinderGrid, GridFunction, TailModel};
pub use indicial::{indicial_roots, IndicialReport, SingularRoots};
pub use kernel::{calibrate, kernel_eval, KernelTable};
pub use linearized::{
    build_potential, decay_fit, kernel_residuals, scaling_kernel, smallest_singular_value,
    solve_linearized, symmetry_kernel, translation_kernel, DecayFitReport, KernelResidualReport,
    LinearizedSolution, NondegeneracyReport, Potential, WeightedNorms,
};
pub use operator::{apply_operator, assemble, AssembledOperator};
pub use oracle::{fl_apply_zonal, fl_apply_zonal_with_breaks, fl_oracle};
pub use params::ProblemParams;
pub use symbol::{compute_constants, symbol, symbol_complex, SpectralConstants};
