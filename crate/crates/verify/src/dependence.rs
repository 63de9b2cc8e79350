//! Continuous dependence on the initial data: two runs whose initial `φ`
//! differ by `δ` times a smooth zero-mean bump are compared over time, and
//! the growth of their distance is measured against a Grönwall envelope
//! driven by the regularity functional `G` of the two solutions.

use pfsi_core::config::RunConfig;
use pfsi_core::forcing::NoForcing;
use pfsi_core::grid::ops::{gradient_to_faces, laplace_neumann};
use pfsi_core::grid::{GridSpec, MacVelocity, ScalarField, TensorField};
use pfsi_core::momentum::ViscousOperator;
use pfsi_core::presets::initial_state;
use pfsi_core::timeloop::{step, SimState};

use crate::VerifyError;

/// `cos(πx/lx)·cos(πy/ly)`: smooth, zero mean on the cell centres, and
/// compatible with the Neumann condition.
pub fn bump(g: &GridSpec) -> ScalarField {
    let (lx, ly) = (g.lx, g.ly);
    ScalarField::from_fn(g, |x, y| (std::f64::consts::PI * x / lx).cos() * (std::f64::consts::PI * y / ly).cos())
}

/// Discrete `H¹`, `H²`, `H³` squared norms of a cell field
/// (`|s|² + |∇s|² + |Δs|² + |∇Δs|²`, truncated at the requested order).
pub fn scalar_hk(s: &ScalarField, k: usize) -> f64 {
    let mut total = s.dot(s);
    let mut lap = s.clone();
    for order in 1..=k {
        if order % 2 == 1 {
            let g = gradient_to_faces(&lap);
            total += g.dot(&g);
        } else {
            lap = laplace_neumann(&lap);
            total += lap.dot(&lap);
        }
    }
    total
}

/// Velocity counterpart of [`scalar_hk`] with the no-slip vector Laplacian.
pub fn velocity_hk(u: &MacVelocity, k: usize) -> f64 {
    let op = ViscousOperator::constant(u.grid(), 1.0);
    let mut total = u.dot(u);
    let mut cur = u.clone();
    for order in 1..=k {
        if order % 2 == 1 {
            total += op.dissipation(&cur);
        } else {
            cur = op.apply(&cur);
            total += cur.dot(&cur);
        }
    }
    total
}

pub fn tensor_hk(f: &TensorField, k: usize) -> f64 {
    let g = *f.grid();
    f.components()
        .iter()
        .map(|c| scalar_hk(&ScalarField::from_values(&g, c.clone()).expect("grid sized"), k))
        .sum()
}

/// `G = |u₂|²_{H²} + |u₁|_{H³} + |φ₁|⁴_{H³} + |φ₂|⁴_{H³} + |F₁|⁴_{H²} + |F₂|⁴_{H²}`.
pub fn g_functional(s1: &SimState, s2: &SimState) -> f64 {
    velocity_hk(&s2.u, 2)
        + velocity_hk(&s1.u, 3).sqrt()
        + scalar_hk(&s1.phi, 3).powi(2)
        + scalar_hk(&s2.phi, 3).powi(2)
        + tensor_hk(&s1.f, 2).powi(2)
        + tensor_hk(&s2.f, 2).powi(2)
}

/// `(|u₁ − u₂|² + |F₁ − F₂|² + |φ₁ − φ₂|²)^{1/2}`.
pub fn distance(a: &SimState, b: &SimState) -> f64 {
    let du = a.u.sub(&b.u);
    let df = a.f.sub(&b.f);
    let dp = a.phi.sub(&b.phi);
    (du.dot(&du) + df.dot(&df) + dp.dot(&dp)).sqrt()
}

/// Time series of one perturbed pair.
#[derive(Clone, Debug, PartialEq)]
pub struct GrowthRecord {
    pub delta: f64,
    pub t: Vec<f64>,
    /// Distance `D(t)`.
    pub d: Vec<f64>,
    /// `G(t)` of the two solutions.
    pub g: Vec<f64>,
}

impl GrowthRecord {
    pub fn ratio(&self) -> f64 {
        self.d.last().copied().unwrap_or(0.0) / self.delta
    }

    /// Trapezoidal `∫₀ᵗ G` at every sample.
    pub fn g_integral(&self) -> Vec<f64> {
        let mut acc = vec![0.0; self.t.len()];
        for k in 1..self.t.len() {
            acc[k] = acc[k - 1] + 0.5 * (self.g[k] + self.g[k - 1]) * (self.t[k] - self.t[k - 1]);
        }
        acc
    }

    /// Smallest `C ≥ 0` with `D(t) ≤ D(0)·exp(C∫₀ᵗG)` at every sample.
    pub fn fit_constant(&self) -> f64 {
        let ig = self.g_integral();
        let d0 = self.d[0];
        let mut c: f64 = 0.0;
        for k in 1..self.t.len() {
            if ig[k] > 0.0 && d0 > 0.0 && self.d[k] > 0.0 {
                c = c.max((self.d[k] / d0).ln() / ig[k]);
            }
        }
        c
    }

    /// Largest `D(t) / (D(0) exp(C∫G))` over the series (≤ 1 when enveloped).
    pub fn envelope_excess(&self, c: f64) -> f64 {
        let ig = self.g_integral();
        let d0 = self.d[0];
        self.d
            .iter()
            .zip(&ig)
            .map(|(d, i)| if d0 > 0.0 { d / (d0 * (c * i).exp()) } else { 0.0 })
            .fold(0.0, f64::max)
    }
}

/// Runs the unperturbed configuration and one perturbed copy per `δ` with the
/// same fixed step, recording `D(t)` and `G(t)` every step.
pub fn continuous_dependence(cfg: &RunConfig, deltas: &[f64], t_end: f64) -> Result<Vec<GrowthRecord>, VerifyError> {
    if deltas.iter().any(|d| !(*d >= 0.0 && d.is_finite())) {
        return Err(VerifyError::Input("perturbation sizes must be non-negative".into()));
    }
    let p = cfg.model_params();
    let ctrl = cfg.step_control();
    let dt = cfg.time.dt;
    let base = initial_state(cfg)?;
    let shape = bump(base.grid());
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;

    let mut base_traj = vec![base.clone()];
    let mut cur = base;
    for k in 0..steps {
        let h = if k + 1 == steps { t_end - cur.t } else { dt };
        cur = step(&cur, &p, &pfsi_core::timeloop::StepControl { dt: h, ..ctrl }, &NoForcing)?.0;
        base_traj.push(cur.clone());
    }

    let mut out = Vec::new();
    for &delta in deltas {
        let s0 = &base_traj[0];
        let mut phi = s0.phi.clone();
        phi.axpy(delta, &shape);
        let mut s = SimState::new(s0.u.clone(), phi, s0.f.clone(), &p)?;
        let mut rec = GrowthRecord {
            delta,
            t: vec![0.0],
            d: vec![distance(&s, s0)],
            g: vec![g_functional(s0, &s)],
        };
        for (k, reference) in base_traj.iter().enumerate().skip(1) {
            let h = reference.t - base_traj[k - 1].t;
            s = step(&s, &p, &pfsi_core::timeloop::StepControl { dt: h, ..ctrl }, &NoForcing)?.0;
            rec.t.push(s.t);
            rec.d.push(distance(&s, reference));
            rec.g.push(g_functional(reference, &s));
        }
        out.push(rec);
    }
    Ok(out)
}
