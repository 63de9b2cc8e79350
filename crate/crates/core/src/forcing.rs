//! Source terms injected into the three evolution equations (used by the
//! manufactured-solution harness).

use crate::grid::{GridSpec, MacVelocity, ScalarField, TensorField};

/// Time-dependent body forces and sources. Every method defaults to "none".
pub trait Forcing: Send + Sync {
    /// Source `s` in `φ_t + u·∇φ = τΔμ + s`.
    fn phase_source(&self, _grid: &GridSpec, _t: f64) -> Option<ScalarField> {
        None
    }

    /// Source `S` in `F_t + u·∇F = (∇u)F + S`.
    fn tensor_source(&self, _grid: &GridSpec, _t: f64) -> Option<TensorField> {
        None
    }

    /// External body force on faces in the momentum equation.
    fn momentum_source(&self, _grid: &GridSpec, _t: f64) -> Option<MacVelocity> {
        None
    }
}

/// The unforced problem.
#[derive(Clone, Copy, Debug, Default)]
pub struct NoForcing;

impl Forcing for NoForcing {}
