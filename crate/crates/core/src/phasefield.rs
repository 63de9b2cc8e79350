//! Double-well potential, chemical potential and the stabilized
//! Cahn–Hilliard step.

use crate::elasticity::trace_elastic;
use crate::error::{Error, Result};
use crate::grid::ops::{advective_flux_into, divergence_into, gradient_to_faces, laplace_diagonal, laplace_into, laplace_squared_diagonal, Advection};
use crate::grid::{MacVelocity, ScalarField, TensorField};
use crate::linalg::{pcg, CgOptions};
use crate::params::ModelParams;

/// `f(φ) = φ²(φ − 1)²/(4h²)`.
#[inline]
pub fn double_well(phi: f64, h: f64) -> f64 {
    let a = phi * (phi - 1.0);
    a * a / (4.0 * h * h)
}

/// `f′(φ) = φ(φ − 1)(2φ − 1)/(2h²)`.
#[inline]
pub fn double_well_prime(phi: f64, h: f64) -> f64 {
    phi * (phi - 1.0) * (2.0 * phi - 1.0) / (2.0 * h * h)
}

/// `f″(φ) = (6φ² − 6φ + 1)/(2h²)`.
#[inline]
pub fn double_well_second(phi: f64, h: f64) -> f64 {
    (6.0 * phi * phi - 6.0 * phi + 1.0) / (2.0 * h * h)
}

/// `f‴(φ) = (12φ − 6)/(2h²)`.
#[inline]
pub fn double_well_third(phi: f64, h: f64) -> f64 {
    (12.0 * phi - 6.0) / (2.0 * h * h)
}

/// `μ = −λΔφ + λγ f′(φ) − (λₑ/2) tr(FFᵀ − I)`.
pub fn chemical_potential(phi: &ScalarField, f: &TensorField, p: &ModelParams) -> Result<ScalarField> {
    phi.grid().check_same(f.grid())?;
    let g = *phi.grid();
    let mut lap = vec![0.0; g.n_cells()];
    laplace_into(&g, phi.values(), &mut lap);
    let tr = trace_elastic(f);
    let vals = phi
        .values()
        .iter()
        .zip(&lap)
        .zip(tr.values())
        .map(|((&ph, &l), &t)| -p.lambda * l + p.lambda * p.gamma * double_well_prime(ph, p.h) - 0.5 * p.lambda_e * t)
        .collect();
    ScalarField::from_values(&g, vals)
}

/// Mixing energy `∫ λ|∇φ|²/2 + λγ f(φ)`.
pub fn ch_energy(phi: &ScalarField, p: &ModelParams) -> f64 {
    let g = phi.grid();
    let grad = gradient_to_faces(phi);
    let bulk: f64 = phi.values().iter().map(|&x| double_well(x, p.h)).sum();
    0.5 * p.lambda * grad.dot(&grad) + p.lambda * p.gamma * bulk * g.cell_volume()
}

#[derive(Clone, Copy, Debug)]
pub struct ChOptions {
    /// Relative residual of the Schur-complement solve.
    pub tol: f64,
    pub max_iter: usize,
    pub advection: Advection,
}

impl Default for ChOptions {
    fn default() -> Self {
        ChOptions {
            tol: 1e-10,
            max_iter: 10_000,
            advection: Advection::Upwind,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ChStep {
    pub phi: ScalarField,
    pub mu: ScalarField,
    pub iterations: usize,
    pub residual: f64,
}

/// One linearly implicit step
///
/// ```text
/// (φ − φⁿ)/dt + ∇·(uⁿφⁿ) = τΔμ + s
/// μ = −λΔφ + λγ[f′(φⁿ) + S(φ − φⁿ)] − (λₑ/2) tr(FⁿFⁿᵀ − I)
/// ```
///
/// solved through the symmetric positive definite Schur complement
/// `φ/dt + τλΔ²φ − τλγSΔφ`; `μ` is then recovered from its definition.
/// The optional source `s` is used by manufactured-solution tests.
pub fn cahn_hilliard_step(
    phi_n: &ScalarField,
    u_n: &MacVelocity,
    f_n: &TensorField,
    dt: f64,
    p: &ModelParams,
    opts: &ChOptions,
    source: Option<&ScalarField>,
) -> Result<ChStep> {
    let g = *phi_n.grid();
    g.check_same(u_n.grid())?;
    g.check_same(f_n.grid())?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Input(format!("time step must be positive, got {dt}")));
    }
    if !phi_n.is_finite() || !u_n.is_finite() || !f_n.is_finite() {
        return Err(Error::Input("non-finite input to the Cahn–Hilliard step".into()));
    }
    let n = g.n_cells();
    let s_stab = p.stabilization();
    let (tl, tls) = (p.tau * p.lambda, p.tau * p.lambda * p.gamma * s_stab);

    // explicit part of μ: λγ(f′(φⁿ) − Sφⁿ) − (λₑ/2)T
    let tr = trace_elastic(f_n);
    let mu_exp: Vec<f64> = phi_n
        .values()
        .iter()
        .zip(tr.values())
        .map(|(&ph, &t)| p.lambda * p.gamma * (double_well_prime(ph, p.h) - s_stab * ph) - 0.5 * p.lambda_e * t)
        .collect();
    let mut lap_mu = vec![0.0; n];
    laplace_into(&g, &mu_exp, &mut lap_mu);

    let mut adv = vec![0.0; n];
    if u_n.max_abs() > 0.0 {
        let mut fu = vec![0.0; g.n_xfaces()];
        let mut fv = vec![0.0; g.n_yfaces()];
        advective_flux_into(&g, u_n.u(), u_n.v(), phi_n.values(), opts.advection, &mut fu, &mut fv);
        divergence_into(&g, &fu, &fv, &mut adv);
    }

    let mut rhs: Vec<f64> = (0..n)
        .map(|k| phi_n.values()[k] / dt - adv[k] + p.tau * lap_mu[k])
        .collect();
    if let Some(s) = source {
        g.check_same(s.grid())?;
        rhs.iter_mut().zip(s.values()).for_each(|(r, s)| *r += s);
    }

    let ld = laplace_diagonal(&g);
    let l2d = laplace_squared_diagonal(&g);
    let inv_diag: Vec<f64> = (0..n).map(|k| 1.0 / (1.0 / dt + tl * l2d[k] - tls * ld[k])).collect();

    let mut tmp = vec![0.0; n];
    let mut tmp2 = vec![0.0; n];
    let apply = |x: &[f64], y: &mut [f64]| {
        laplace_into(&g, x, &mut tmp);
        laplace_into(&g, &tmp, &mut tmp2);
        for k in 0..n {
            y[k] = x[k] / dt + tl * tmp2[k] - tls * tmp[k];
        }
    };
    let mut phi = phi_n.values().to_vec();
    let cg = CgOptions::relative(opts.tol, opts.max_iter);
    let out = pcg("Cahn–Hilliard", apply, Some(&inv_diag), &rhs, &mut phi, &cg)?;

    // The Jacobi-preconditioned iterates are not mean-preserving; restore the
    // exact discrete mass balance (a constant shift leaves μ's gradient and
    // the residual's zero-mean part unchanged).
    let target = phi_n.values().iter().sum::<f64>() / n as f64
        + dt * (source.map_or(0.0, |s| s.values().iter().sum::<f64>()) - adv.iter().sum::<f64>()) / n as f64;
    let shift = target - phi.iter().sum::<f64>() / n as f64;
    phi.iter_mut().for_each(|x| *x += shift);

    let mut lap_phi = vec![0.0; n];
    laplace_into(&g, &phi, &mut lap_phi);
    let mu: Vec<f64> = (0..n)
        .map(|k| -p.lambda * lap_phi[k] + mu_exp[k] + p.lambda * p.gamma * s_stab * phi[k])
        .collect();
    let phi = ScalarField::from_values(&g, phi)?;
    if !phi.is_finite() {
        return Err(Error::SolverDiverged {
            what: "Cahn–Hilliard".into(),
            residual: f64::NAN,
            iterations: out.iterations,
        });
    }
    Ok(ChStep {
        phi,
        mu: ScalarField::from_values(&g, mu)?,
        iterations: out.iterations,
        residual: out.residual,
    })
}
