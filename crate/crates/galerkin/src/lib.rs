//! Faedo–Galerkin reduction of the coupled model on discrete eigenbases:
//! Stokes modes for the velocity, Neumann modes of `−Δ + I` for the phase
//! field and componentwise Neumann modes for the deformation gradient.

pub mod basis;
pub mod eigen;
pub mod model;
pub mod study;

pub use basis::{build_basis, BasisKind, EigenBasis};
pub use model::{galerkin_rhs, integrate_galerkin, Coeffs, GalerkinBases, Trajectory};
pub use study::{convergence_study, GalerkinRow, GalerkinStudy};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GalerkinError {
    #[error(transparent)]
    Core(#[from] pfsi_core::Error),
    #[error("{what} did not converge: residual {residual:.3e} after {iterations} iterations")]
    NotConverged {
        what: &'static str,
        residual: f64,
        iterations: usize,
    },
    #[error("requested {requested} modes but only {available} are available")]
    Dimension { requested: usize, available: usize },
    #[error("non-finite coefficients at step {step}")]
    NonFinite { step: usize },
    #[error("invalid input: {0}")]
    Input(String),
}
