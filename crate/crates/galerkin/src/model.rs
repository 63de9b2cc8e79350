//! The reduced equations on `V¹ₙ × V²ₙ × V³ₙ` and their explicit
//! fourth-order Runge–Kutta integration.
//!
//! Nonlinear terms are evaluated pseudo-spectrally: coefficients are lifted
//! to the grid, every form is evaluated with the grid operators of the full
//! solver, and the result is tested against each basis vector. With the full
//! bases the reduced system is therefore exactly the semi-discretisation the
//! grid solver integrates.

use nalgebra::DVector;
use pfsi_core::elasticity::{elastic_stress_divergence, transport_rate};
use pfsi_core::grid::ops::{advect_scalar, laplace_neumann, Advection};
use pfsi_core::grid::{MacVelocity, ScalarField, TensorField};
use pfsi_core::momentum::{capillary_force, darcy_drag, momentum_advection, ViscousOperator};
use pfsi_core::params::ModelParams;
use pfsi_core::phasefield::chemical_potential;

use crate::basis::{BasisKind, EigenBasis};
use crate::GalerkinError;

/// The three bases `(w_k)`, `(e_k)`, `(M_k)` on one grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GalerkinBases {
    pub u: EigenBasis,
    pub phi: EigenBasis,
    pub f: EigenBasis,
}

impl GalerkinBases {
    pub fn new(u: EigenBasis, phi: EigenBasis, f: EigenBasis) -> Result<Self, GalerkinError> {
        let kinds = [(u.kind, BasisKind::Stokes), (phi.kind, BasisKind::NeumannScalar), (f.kind, BasisKind::Tensor)];
        if kinds.iter().any(|(a, b)| a != b) {
            return Err(GalerkinError::Input("bases must be (stokes, neumann_scalar, tensor)".into()));
        }
        if u.grid != phi.grid || u.grid != f.grid {
            return Err(GalerkinError::Input("bases live on different grids".into()));
        }
        Ok(GalerkinBases { u, phi, f })
    }

    /// The first `(nu, nphi, nf)` modes of each basis.
    pub fn truncate(&self, nu: usize, nphi: usize, nf: usize) -> Result<Self, GalerkinError> {
        Ok(GalerkinBases {
            u: self.u.truncate(nu)?,
            phi: self.phi.truncate(nphi)?,
            f: self.f.truncate(nf)?,
        })
    }

    pub fn project(&self, u: &MacVelocity, phi: &ScalarField, f: &TensorField) -> Result<Coeffs, GalerkinError> {
        Ok(Coeffs {
            u: self.u.project_velocity(u)?,
            phi: self.phi.project_scalar(phi)?,
            f: self.f.project_tensor(f)?,
        })
    }

    pub fn lift(&self, c: &Coeffs) -> Result<(MacVelocity, ScalarField, TensorField), GalerkinError> {
        Ok((self.u.lift_velocity(&c.u)?, self.phi.lift_scalar(&c.phi)?, self.f.lift_tensor(&c.f)?))
    }
}

/// Coefficient vectors of `(uₙ, φₙ, Fₙ)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Coeffs {
    pub u: DVector<f64>,
    pub phi: DVector<f64>,
    pub f: DVector<f64>,
}

impl Coeffs {
    /// `self + a·other`.
    pub fn plus(&self, a: f64, other: &Coeffs) -> Coeffs {
        Coeffs {
            u: &self.u + &other.u * a,
            phi: &self.phi + &other.phi * a,
            f: &self.f + &other.f * a,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.phi.iter()).chain(self.f.iter()).all(|x| x.is_finite())
    }
}

/// Time derivatives of the coefficients together with the projected
/// chemical potential `μₙ = Π²ₙ(−λΔφₙ + λγf′(φₙ) − (λₑ/2)tr(FₙFₙᵀ − I))`.
#[derive(Clone, Debug)]
pub struct Rhs {
    pub rate: Coeffs,
    pub mu: DVector<f64>,
}

/// Right-hand side of the reduced system:
///
/// ```text
/// ρ(u̇ₙ, w) = (−∇·(uₙ⊗uₙ) + ∇·(η∇uₙ) − c(φₙ)uₙ + (μₙ + λₑT/2)∇φₙ + ∇·σ(φₙ, Fₙ), w)
/// (φ̇ₙ, e) = (−∇·(uₙφₙ) + τΔμₙ, e)
/// (Ḟₙ, M) = (−∇·(uₙ⊗Fₙ) + (∇uₙ)Fₙ, M)
/// ```
///
/// The pressure drops out because every `w` is discretely divergence-free.
pub fn galerkin_rhs(c: &Coeffs, bases: &GalerkinBases, p: &ModelParams, scheme: Advection) -> Result<Rhs, GalerkinError> {
    let (u, phi, f) = bases.lift(c)?;
    let mu_full = chemical_potential(&phi, &f, p)?;
    let mu = bases.phi.project_scalar(&mu_full)?;
    let mu_n = bases.phi.lift_scalar(&mu)?;

    let mut phi_rate = laplace_neumann(&mu_n).scaled(p.tau);
    phi_rate.axpy(-1.0, &advect_scalar(&u, &phi, scheme)?);

    let mut force = ViscousOperator::new(&phi, p).apply(&u).scaled(-1.0);
    force.axpy(-1.0, &momentum_advection(&u, scheme).scaled(p.rho));
    force.axpy(1.0, &darcy_drag(&phi, &u, p)?);
    force.axpy(1.0, &capillary_force(&mu_n, &phi, &f, p)?);
    force.axpy(1.0, &elastic_stress_divergence(&phi, &f, p.lambda_e)?);

    let f_rate = transport_rate(&f, &u, scheme)?;
    Ok(Rhs {
        rate: Coeffs {
            u: bases.u.project_velocity(&force.scaled(1.0 / p.rho))?,
            phi: bases.phi.project_scalar(&phi_rate)?,
            f: bases.f.project_tensor(&f_rate)?,
        },
        mu,
    })
}

/// Sampled coefficient trajectory.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t: Vec<f64>,
    pub coeffs: Vec<Coeffs>,
}

impl Trajectory {
    pub fn last(&self) -> &Coeffs {
        self.coeffs.last().expect("trajectory holds the initial sample")
    }
}

/// Classical RK4 from `t = 0` to `t_end` with step `dt` (the last step is
/// shortened to land on `t_end`), sampling every `sample_every` steps and at
/// the end.
pub fn integrate_galerkin(
    init: &Coeffs,
    t_end: f64,
    dt: f64,
    bases: &GalerkinBases,
    p: &ModelParams,
    scheme: Advection,
    sample_every: usize,
) -> Result<Trajectory, GalerkinError> {
    if !(dt > 0.0 && dt.is_finite()) || !(t_end >= 0.0 && t_end.is_finite()) {
        return Err(GalerkinError::Input(format!("need dt > 0 and t_end ≥ 0, got dt = {dt}, t_end = {t_end}")));
    }
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let every = sample_every.max(1);
    let mut traj = Trajectory {
        t: vec![0.0],
        coeffs: vec![init.clone()],
    };
    let rhs = |c: &Coeffs| galerkin_rhs(c, bases, p, scheme).map(|r| r.rate);
    let mut y = init.clone();
    let mut t = 0.0;
    for k in 0..steps {
        let h = if k + 1 == steps { t_end - t } else { dt };
        let k1 = rhs(&y)?;
        let k2 = rhs(&y.plus(0.5 * h, &k1))?;
        let k3 = rhs(&y.plus(0.5 * h, &k2))?;
        let k4 = rhs(&y.plus(h, &k3))?;
        y = y.plus(h / 6.0, &k1).plus(h / 3.0, &k2).plus(h / 3.0, &k3).plus(h / 6.0, &k4);
        t = if k + 1 == steps { t_end } else { t + h };
        if !y.is_finite() {
            return Err(GalerkinError::NonFinite { step: k + 1 });
        }
        if (k + 1) % every == 0 || k + 1 == steps {
            traj.t.push(t);
            traj.coeffs.push(y.clone());
        }
    }
    Ok(traj)
}
