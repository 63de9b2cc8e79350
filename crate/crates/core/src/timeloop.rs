//! Splitting scheme, adaptive time step, and the per-step diagnostics:
//! mass, energy budget, the regularity functionals `Z` and `M`, and the
//! existence-horizon estimate.

use crate::elasticity::{det_drift, trace_elastic, transport_step};
use crate::error::{Error, Result};
use crate::forcing::{Forcing, NoForcing};
use crate::grid::ops::{divergence, gradient_to_faces, laplace_neumann, mean_value, Advection};
use crate::grid::{GridSpec, MacVelocity, ScalarField, TensorField};
use crate::momentum::{drag_budget, momentum_step, MomentumInputs, MomentumOptions, ViscousOperator};
use crate::params::ModelParams;
use crate::phasefield::{cahn_hilliard_step, chemical_potential, double_well, ChOptions};

/// Complete solver state with the lagged copies used for time derivatives.
#[derive(Clone, Debug, PartialEq)]
pub struct SimState {
    pub t: f64,
    pub n: u64,
    pub u: MacVelocity,
    pub p: ScalarField,
    pub phi: ScalarField,
    pub mu: ScalarField,
    pub f: TensorField,
    pub u_prev: MacVelocity,
    pub phi_prev: ScalarField,
    pub f_prev: TensorField,
    /// Step that produced the current fields (0 for an initial state).
    pub dt_prev: f64,
}

impl SimState {
    /// Initial state at `t = 0` with `μ` assembled from `φ` and `F` and the
    /// lagged fields equal to the current ones.
    pub fn new(u: MacVelocity, phi: ScalarField, f: TensorField, params: &ModelParams) -> Result<Self> {
        let g = *phi.grid();
        g.check_same(u.grid())?;
        let mu = chemical_potential(&phi, &f, params)?;
        Ok(SimState {
            t: 0.0,
            n: 0,
            u_prev: u.clone(),
            phi_prev: phi.clone(),
            f_prev: f.clone(),
            u,
            p: ScalarField::zeros(&g),
            phi,
            mu,
            f,
            dt_prev: 0.0,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        self.phi.grid()
    }

    /// Name of the first field holding a NaN or infinity.
    pub fn first_non_finite(&self) -> Option<&'static str> {
        if !self.u.is_finite() {
            Some("u")
        } else if !self.p.is_finite() {
            Some("p")
        } else if !self.phi.is_finite() {
            Some("phi")
        } else if !self.mu.is_finite() {
            Some("mu")
        } else if !self.f.is_finite() {
            Some("F")
        } else {
            None
        }
    }
}

/// Numerical controls of one step.
#[derive(Clone, Copy, Debug)]
pub struct StepControl {
    pub dt: f64,
    pub ch_tol: f64,
    pub visc_tol: f64,
    /// Bound on `max|∇·u|` after projection.
    pub proj_tol: f64,
    pub max_iter: usize,
    pub advection: Advection,
    /// Courant number above which a step is refused.
    pub cfl_limit: f64,
    /// Safety factor of the suggested step.
    pub cfl_safety: f64,
    /// Retry a failed step once with `dt/2`.
    pub retry: bool,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl {
            dt: 1e-3,
            ch_tol: 1e-10,
            visc_tol: 1e-10,
            proj_tol: 1e-10,
            max_iter: 10_000,
            advection: Advection::Upwind,
            cfl_limit: 0.9,
            cfl_safety: 0.5,
            retry: true,
        }
    }
}

/// Solver effort of one step.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct StepStats {
    pub dt: f64,
    pub ch_iterations: usize,
    pub visc_iterations: usize,
    pub proj_iterations: usize,
    pub retried: bool,
}

/// Wall-clock seconds spent in each sub-step (for benchmarking).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PhaseTimes {
    pub cahn_hilliard: f64,
    pub transport: f64,
    pub momentum: f64,
}

/// `safety · min h / max|u|`, capped at `dt_max` (returned as is for `u = 0`).
pub fn cfl_dt(state: &SimState, safety: f64, dt_max: f64) -> f64 {
    let m = state.u.max_abs();
    if m == 0.0 {
        dt_max
    } else {
        (safety * state.grid().min_spacing() / m).min(dt_max)
    }
}

fn advance(
    state: &SimState,
    params: &ModelParams,
    ctrl: &StepControl,
    dt: f64,
    forcing: &dyn Forcing,
    times: &mut PhaseTimes,
) -> Result<(SimState, StepStats)> {
    let g = *state.grid();
    let t1 = state.t + dt;

    let clock = std::time::Instant::now();
    let ch_opts = ChOptions {
        tol: ctrl.ch_tol,
        max_iter: ctrl.max_iter,
        advection: ctrl.advection,
    };
    let src = forcing.phase_source(&g, t1);
    let ch = cahn_hilliard_step(&state.phi, &state.u, &state.f, dt, params, &ch_opts, src.as_ref())?;
    times.cahn_hilliard += clock.elapsed().as_secs_f64();

    let clock = std::time::Instant::now();
    let src = forcing.tensor_source(&g, state.t);
    let f_new = transport_step(&state.f, &state.u, dt, ctrl.advection, src.as_ref())?;
    times.transport += clock.elapsed().as_secs_f64();

    let clock = std::time::Instant::now();
    let ext = forcing.momentum_source(&g, t1);
    let inp = MomentumInputs {
        u_n: &state.u,
        phi_n: &state.phi,
        phi_new: &ch.phi,
        mu_new: &ch.mu,
        f_new: &f_new,
        p_guess: Some(&state.p),
        external: ext.as_ref(),
    };
    let mopts = MomentumOptions {
        visc_tol: ctrl.visc_tol,
        proj_tol: ctrl.proj_tol,
        max_iter: ctrl.max_iter,
        advection: ctrl.advection,
    };
    let mom = momentum_step(&inp, dt, params, &mopts)?;
    times.momentum += clock.elapsed().as_secs_f64();

    let next = SimState {
        t: t1,
        n: state.n + 1,
        u: mom.vel,
        p: mom.pressure,
        phi: ch.phi,
        mu: ch.mu,
        f: f_new,
        u_prev: state.u.clone(),
        phi_prev: state.phi.clone(),
        f_prev: state.f.clone(),
        dt_prev: dt,
    };
    let stats = StepStats {
        dt,
        ch_iterations: ch.iterations,
        visc_iterations: mom.visc_iterations,
        proj_iterations: mom.proj_iterations,
        retried: false,
    };
    Ok((next, stats))
}

/// Advances the state by one step of the splitting
/// Cahn–Hilliard → deformation transport → momentum.
///
/// A step whose `dt` exceeds the Courant limit is refused with the suggested
/// step. A failing sub-step is retried once with `dt/2` (the state then
/// advances by `dt/2` only) before the failure is propagated.
pub fn step(state: &SimState, params: &ModelParams, ctrl: &StepControl, forcing: &dyn Forcing) -> Result<(SimState, StepStats)> {
    let mut times = PhaseTimes::default();
    step_timed(state, params, ctrl, forcing, &mut times)
}

/// [`step`] accumulating per-phase wall-clock time into `times`.
pub fn step_timed(
    state: &SimState,
    params: &ModelParams,
    ctrl: &StepControl,
    forcing: &dyn Forcing,
    times: &mut PhaseTimes,
) -> Result<(SimState, StepStats)> {
    let dt = ctrl.dt;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Input(format!("time step must be positive, got {dt}")));
    }
    if let Some(field) = state.first_non_finite() {
        return Err(Error::NonFinite {
            field: field.to_string(),
            step: state.n,
        });
    }
    let courant = dt * state.u.max_abs() / state.grid().min_spacing();
    if courant > ctrl.cfl_limit {
        return Err(Error::Cfl {
            dt,
            suggested: cfl_dt(state, ctrl.cfl_safety, dt),
        });
    }
    let result = match advance(state, params, ctrl, dt, forcing, times) {
        Ok(r) => Ok(r),
        Err(e @ (Error::SolverDiverged { .. } | Error::Cfl { .. })) if ctrl.retry => {
            advance(state, params, ctrl, 0.5 * dt, forcing, times)
                .map(|(s, st)| (s, StepStats { retried: true, ..st }))
                .map_err(|_| e)
        }
        Err(e) => Err(e),
    };
    let (next, stats) = result?;
    if let Some(field) = next.first_non_finite() {
        return Err(Error::NonFinite {
            field: field.to_string(),
            step: next.n,
        });
    }
    Ok((next, stats))
}

/// Energy budget over one step. Rates use the step's actual `dt`;
/// dissipation and work terms use midpoint (trapezoidal) quadrature in time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EnergyReport {
    /// `½∫(ρ|u|² + λ|∇φ|² + λₑ|F|² + 2λγ f(φ))` at the newer state.
    pub e_total: f64,
    pub e_kinetic: f64,
    pub e_mixing: f64,
    pub e_elastic: f64,
    /// `∫η(φ)|∇u|²`.
    pub d_visc: f64,
    /// `∫τ|∇μ|²`.
    pub d_chem: f64,
    /// `∫(η/κ)|u|²`.
    pub d_drag: f64,
    /// `(λₑ/2) d/dt ∫tr(FFᵀ)φ`.
    pub rhs_elastic: f64,
    /// `∫(η/κ)φ|u|²`.
    pub rhs_drag_phi: f64,
    /// Work of manufactured sources, `∫f·u + ∫sμ + λₑ∫(1−φ)F:S`.
    pub w_ext: f64,
    /// `dE/dt + D_visc + D_chem + D_drag − RHS_elastic − RHS_drag_phi − W_ext`.
    pub residual: f64,
}

/// Energy parts `(kinetic, mixing, elastic)`.
pub fn energy_parts(state: &SimState, p: &ModelParams) -> (f64, f64, f64) {
    let g = state.grid();
    let kin = 0.5 * p.rho * state.u.dot(&state.u);
    let gp = gradient_to_faces(&state.phi);
    let bulk: f64 = state.phi.values().iter().map(|&x| double_well(x, p.h)).sum::<f64>() * g.cell_volume();
    let mix = 0.5 * p.lambda * gp.dot(&gp) + p.lambda * p.gamma * bulk;
    let el = 0.5 * p.lambda_e * state.f.dot(&state.f);
    (kin, mix, el)
}

struct Rates {
    d_visc: f64,
    d_chem: f64,
    d_drag: f64,
    rhs_drag_phi: f64,
    w_ext: f64,
}

fn rates(s: &SimState, p: &ModelParams, forcing: &dyn Forcing) -> Rates {
    let g = *s.grid();
    let d_visc = ViscousOperator::new(&s.phi, p).dissipation(&s.u);
    let gm = gradient_to_faces(&s.mu);
    let d_chem = p.tau * gm.dot(&gm);
    let (d_drag, rhs_drag_phi) = drag_budget(&s.phi, &s.u, p);
    let mut w_ext = 0.0;
    if let Some(f) = forcing.momentum_source(&g, s.t) {
        let mut f = f;
        f.zero_boundary();
        w_ext += f.dot(&s.u);
    }
    if let Some(src) = forcing.phase_source(&g, s.t) {
        w_ext += src.dot(&s.mu);
    }
    if let Some(src) = forcing.tensor_source(&g, s.t) {
        let mut w = s.f.clone();
        for comp in w.comps.iter_mut() {
            comp.iter_mut().zip(s.phi.values()).for_each(|(x, ph)| *x *= 1.0 - ph);
        }
        w_ext += p.lambda_e * w.dot(&src);
    }
    Rates {
        d_visc,
        d_chem,
        d_drag,
        rhs_drag_phi,
        w_ext,
    }
}

fn elastic_moment(s: &SimState) -> f64 {
    // ∫ tr(FFᵀ) φ
    let tr = trace_elastic(&s.f);
    s.grid().cell_volume() * tr.values().iter().zip(s.phi.values()).map(|(t, ph)| (t + 2.0) * ph).sum::<f64>()
}

/// Discrete energy identity between two consecutive states.
pub fn energy_budget(state: &SimState, prev: &SimState, p: &ModelParams, forcing: &dyn Forcing) -> EnergyReport {
    let (k1, m1, e1) = energy_parts(state, p);
    let mut rep = EnergyReport {
        e_total: k1 + m1 + e1,
        e_kinetic: k1,
        e_mixing: m1,
        e_elastic: e1,
        ..EnergyReport::default()
    };
    let dt = state.t - prev.t;
    let r1 = rates(state, p, forcing);
    if dt <= 0.0 {
        rep.d_visc = r1.d_visc;
        rep.d_chem = r1.d_chem;
        rep.d_drag = r1.d_drag;
        rep.rhs_drag_phi = r1.rhs_drag_phi;
        rep.w_ext = r1.w_ext;
        return rep;
    }
    let r0 = rates(prev, p, forcing);
    let (k0, m0, e0) = energy_parts(prev, p);
    rep.d_visc = 0.5 * (r0.d_visc + r1.d_visc);
    rep.d_chem = 0.5 * (r0.d_chem + r1.d_chem);
    rep.d_drag = 0.5 * (r0.d_drag + r1.d_drag);
    rep.rhs_drag_phi = 0.5 * (r0.rhs_drag_phi + r1.rhs_drag_phi);
    rep.w_ext = 0.5 * (r0.w_ext + r1.w_ext);
    rep.rhs_elastic = 0.5 * p.lambda_e * (elastic_moment(state) - elastic_moment(prev)) / dt;
    let de = (rep.e_total - (k0 + m0 + e0)) / dt;
    rep.residual = de + rep.d_visc + rep.d_chem + rep.d_drag - rep.rhs_elastic - rep.rhs_drag_phi - rep.w_ext;
    rep
}

/// The regularity functionals `Z` (six addends) and `M` (four addends)
/// evaluated with discrete norms; time derivatives use the lagged fields and
/// `dt_prev` (zero when the state has no history).
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ZReport {
    pub z: f64,
    /// `|∇u|², |u_t|², |Δφ|², |∇φ_t|², |F|²_{H²}, |F_t|²`.
    pub z_terms: [f64; 6],
    pub m: f64,
    /// `(α/4)|u|²_{H²}, (α/4)|u_t|²_{H¹}, (τλ/4)|Δ²φ|², (τλ/4)|∇Δφ_t|²`.
    pub m_terms: [f64; 4],
}

pub const Z_TERM_NAMES: [&str; 6] = ["z_grad_u", "z_u_t", "z_lap_phi", "z_grad_phi_t", "z_F_H2", "z_F_t"];

fn tensor_h2(f: &TensorField) -> f64 {
    let g = *f.grid();
    let mut s = f.dot(f);
    for comp in f.components() {
        let c = ScalarField::from_values(&g, comp.clone()).expect("grid sized");
        let gr = gradient_to_faces(&c);
        let l = laplace_neumann(&c);
        s += gr.dot(&gr) + l.dot(&l);
    }
    s
}

pub fn z_functional(state: &SimState, p: &ModelParams) -> ZReport {
    let g = *state.grid();
    let unit = ViscousOperator::constant(&g, 1.0);
    let grad_u = unit.dissipation(&state.u);
    let lap_phi = laplace_neumann(&state.phi);
    let lap2_phi = laplace_neumann(&lap_phi);
    let au = unit.apply(&state.u);

    let (u_t, phi_t, f_t) = if state.dt_prev > 0.0 {
        let inv = 1.0 / state.dt_prev;
        (
            state.u.sub(&state.u_prev).scaled(inv),
            state.phi.sub(&state.phi_prev).scaled(inv),
            state.f.sub(&state.f_prev).scaled(inv),
        )
    } else {
        (MacVelocity::zeros(&g), ScalarField::zeros(&g), TensorField::zeros(&g))
    };
    let gphi_t = gradient_to_faces(&phi_t);
    let glap_phi_t = gradient_to_faces(&laplace_neumann(&phi_t));

    let z_terms = [
        grad_u,
        u_t.dot(&u_t),
        lap_phi.dot(&lap_phi),
        gphi_t.dot(&gphi_t),
        tensor_h2(&state.f),
        f_t.dot(&f_t),
    ];
    let m_terms = [
        0.25 * p.alpha * (state.u.dot(&state.u) + grad_u + au.dot(&au)),
        0.25 * p.alpha * (u_t.dot(&u_t) + unit.dissipation(&u_t)),
        0.25 * p.tau * p.lambda * lap2_phi.dot(&lap2_phi),
        0.25 * p.tau * p.lambda * glap_phi_t.dot(&glap_phi_t),
    ];
    ZReport {
        z: z_terms.iter().sum(),
        z_terms,
        m: m_terms.iter().sum(),
        m_terms,
    }
}

/// `T₀ = 1/(C₁ 2²⁶ (1 + Z(0))²⁶)`.
pub fn existence_horizon(z0: f64, c1: f64) -> f64 {
    1.0 / (c1 * 2f64.powi(26) * (1.0 + z0).powi(26))
}

/// One row of the diagnostics time series.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DiagnosticsRow {
    pub t: f64,
    pub dt: f64,
    pub mass: f64,
    pub energy: EnergyReport,
    pub z: ZReport,
    pub det_drift: f64,
    pub div_max: f64,
}

pub fn diagnostics(state: &SimState, prev: &SimState, p: &ModelParams, forcing: &dyn Forcing) -> DiagnosticsRow {
    DiagnosticsRow {
        t: state.t,
        dt: state.dt_prev,
        mass: mean_value(&state.phi),
        energy: energy_budget(state, prev, p, forcing),
        z: z_functional(state, p),
        det_drift: det_drift(&state.f),
        div_max: divergence(&state.u).max_abs(),
    }
}

/// How the step size is chosen in [`run`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DtPolicy {
    Fixed(f64),
    /// `cfl_dt` with the given safety factor, capped at `dt_max`.
    Cfl { safety: f64, dt_max: f64 },
}

/// Settings for a time integration.
#[derive(Clone, Copy, Debug)]
pub struct RunSettings {
    pub t_end: f64,
    pub max_steps: Option<u64>,
    pub policy: DtPolicy,
    pub control: StepControl,
    /// Diagnostics every `k` steps (0 disables).
    pub diag_every: u64,
    /// Snapshot output every `k` steps (0 disables).
    pub output_every: u64,
    /// Checkpoints every `k` steps (0 disables).
    pub checkpoint_every: u64,
}

/// Receives the products of a run.
pub trait RunObserver {
    fn diagnostics(&mut self, _row: &DiagnosticsRow) -> Result<()> {
        Ok(())
    }
    fn snapshot(&mut self, _state: &SimState) -> Result<()> {
        Ok(())
    }
    fn checkpoint(&mut self, _state: &SimState) -> Result<()> {
        Ok(())
    }
}

/// Collects diagnostics rows in memory.
#[derive(Clone, Debug, Default)]
pub struct Collect {
    pub rows: Vec<DiagnosticsRow>,
}

impl RunObserver for Collect {
    fn diagnostics(&mut self, row: &DiagnosticsRow) -> Result<()> {
        self.rows.push(*row);
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub state: SimState,
    pub steps: u64,
}

/// Integrates from `state` until `t_end` (or `max_steps` further steps).
/// Diagnostics for the initial state are emitted first. A failing step
/// triggers a checkpoint of the last good state before the error is
/// returned.
pub fn run(
    mut state: SimState,
    params: &ModelParams,
    settings: &RunSettings,
    forcing: &dyn Forcing,
    observer: &mut dyn RunObserver,
) -> Result<RunOutput> {
    let t_end = settings.t_end;
    if settings.diag_every > 0 {
        observer.diagnostics(&diagnostics(&state, &state, params, forcing))?;
    }
    if settings.output_every > 0 {
        observer.snapshot(&state)?;
    }
    let mut steps = 0u64;
    // tolerance against accumulated round-off in t
    let eps = 1e-12 * t_end.abs().max(1.0);
    while state.t < t_end - eps && settings.max_steps.is_none_or(|m| steps < m) {
        let mut dt = match settings.policy {
            DtPolicy::Fixed(dt) => dt,
            DtPolicy::Cfl { safety, dt_max } => cfl_dt(&state, safety, dt_max),
        };
        if state.t + dt > t_end - eps {
            dt = t_end - state.t;
        }
        let ctrl = StepControl { dt, ..settings.control };
        let next = match step(&state, params, &ctrl, forcing) {
            Ok((s, _)) => s,
            Err(e) => {
                observer.checkpoint(&state)?;
                return Err(e);
            }
        };
        steps += 1;
        let emit = |k: u64| k > 0 && (next.n % k == 0);
        if emit(settings.diag_every) {
            let row = diagnostics(&next, &state, params, forcing);
            let zbad = !row.z.z.is_finite();
            observer.diagnostics(&row)?;
            if zbad {
                observer.checkpoint(&state)?;
                return Err(Error::NonFinite {
                    field: "Z".into(),
                    step: next.n,
                });
            }
        }
        if emit(settings.output_every) {
            observer.snapshot(&next)?;
        }
        if emit(settings.checkpoint_every) {
            observer.checkpoint(&next)?;
        }
        state = next;
    }
    Ok(RunOutput { state, steps })
}

/// Unforced run without observers.
pub fn run_plain(state: SimState, params: &ModelParams, settings: &RunSettings) -> Result<RunOutput> {
    let mut sink = Collect::default();
    run(state, params, settings, &NoForcing, &mut sink)
}
