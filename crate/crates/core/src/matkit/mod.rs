//! Dense real linear-algebra kernel for the small matrices this crate
//! works with (dimension cap 32; Hamiltonian paths use twice that). All
//! heavier structure (periodic functions, Riccati solves, series) is built
//! on these primitives so that every numerical claim bottoms out here.

mod chol;
mod eig;
mod expm;
mod lu;
mod matrix;
mod sylvester;

pub use chol::{definiteness, is_positive_definite, Definiteness};
pub use eig::{
    eigenpair_residual, eigenvalues, eigenvector, is_hurwitz, spectrum, SpectrumReport,
};
pub use expm::mat_exp;
pub use lu::{complex_solve, Lu};
pub use matrix::Matrix;
pub use sylvester::{solve_sylvester, sylvester_residual, DIM_CAP};

/// Relative asymmetry accepted when a caller hands in a nominally
/// symmetric matrix; beyond this it is an error rather than something to
/// silently repair.
pub const SYMMETRY_REL_TOL: f64 = 1e-9;

/// Default margin for "strictly Hurwitz" checks.
pub const HURWITZ_MARGIN: f64 = 1e-7;
