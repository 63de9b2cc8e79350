//! Structured-grid solver for a diffuse-interface fluid–structure model:
//! incompressible Navier–Stokes with variable viscosity and Darcy drag,
//! Cahn–Hilliard phase field with an elastically coupled chemical potential,
//! and transport of the deformation gradient.
//!
//! The crate is organised bottom-up: [`grid`] holds field containers and
//! operators, [`phasefield`], [`elasticity`] and [`momentum`] advance one
//! equation each, and [`timeloop`] composes them and evaluates the energy
//! and regularity diagnostics.

pub mod checkpoint;
pub mod config;
pub mod elasticity;
pub mod error;
pub mod forcing;
pub mod grid;
pub mod linalg;
pub mod momentum;
pub mod par;
pub mod params;
pub mod phasefield;
pub mod presets;
pub mod timeloop;

pub use error::{Error, Result};
pub use grid::{BcMode, GridSpec, MacVelocity, ScalarField, TensorField};
pub use params::ModelParams;
