//! Manufactured solutions on the periodic unit square.
//!
//! Every analytic field is a finite sum of separable modes
//! `c·cos(kx·x + px)·cos(ky·y + py)·cos(ω·t + pt)`, so derivatives of any
//! order are closed-form. The forcing of each equation is assembled from
//! hand-derived expressions over these derivatives ([`MmsCase::forcing_at`])
//! and validated against an independent finite-difference application of
//! the continuous operators to field values only ([`MmsCase::forcing_fd`]).

use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;
use std::sync::Mutex;

use pfsi_core::error::Result;
use pfsi_core::forcing::Forcing;
use pfsi_core::grid::ops::{mean_value, Advection};
use pfsi_core::grid::{BcMode, GridSpec, MacVelocity, ScalarField, TensorField};
use pfsi_core::params::{Coefficient, ModelParams, Profile};
use pfsi_core::phasefield::{double_well_prime, double_well_second, double_well_third};
use pfsi_core::timeloop::{energy_budget, step, SimState, StepControl};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::order::{observed_order, OrderFit};
use crate::VerifyError;

/// One separable mode `c·cos(kx x + px)·cos(ky y + py)·cos(ω t + pt)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mode {
    pub c: f64,
    pub kx: f64,
    pub ky: f64,
    pub px: f64,
    pub py: f64,
    pub omega: f64,
    pub pt: f64,
}

impl Mode {
    pub fn new(c: f64, kx: f64, ky: f64) -> Self {
        Mode {
            c,
            kx,
            ky,
            px: 0.0,
            py: 0.0,
            omega: 0.0,
            pt: 0.0,
        }
    }

    pub fn phases(self, px: f64, py: f64) -> Self {
        Mode { px, py, ..self }
    }

    pub fn time(self, omega: f64, pt: f64) -> Self {
        Mode { omega, pt, ..self }
    }

    /// `∂ₓᵃ ∂ᵧᵇ ∂ₜᵐ` of the mode.
    fn d(&self, a: u32, b: u32, m: u32, x: f64, y: f64, t: f64) -> f64 {
        self.trig(x, y, t).d(self, a, b, m)
    }

    fn trig(&self, x: f64, y: f64, t: f64) -> Trig {
        let (sx, cx) = (self.kx * x + self.px).sin_cos();
        let (sy, cy) = (self.ky * y + self.py).sin_cos();
        let (st, ct) = (self.omega * t + self.pt).sin_cos();
        Trig([cx, sx, cy, sy, ct, st])
    }
}

/// Cosines and sines of the three phase arguments of a mode at one point.
#[derive(Clone, Copy, Debug)]
struct Trig([f64; 6]);

/// `dⁿ/dθⁿ cos θ` from `cos θ`, `sin θ`.
#[inline]
fn rot(c: f64, s: f64, n: u32) -> f64 {
    match n % 4 {
        0 => c,
        1 => -s,
        2 => -c,
        _ => s,
    }
}

impl Trig {
    #[inline]
    fn d(&self, md: &Mode, a: u32, b: u32, m: u32) -> f64 {
        let [cx, sx, cy, sy, ct, st] = self.0;
        md.c * md.kx.powi(a as i32)
            * md.ky.powi(b as i32)
            * md.omega.powi(m as i32)
            * rot(cx, sx, a)
            * rot(cy, sy, b)
            * rot(ct, st, m)
    }
}

/// Constant plus a sum of modes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModalField {
    pub constant: f64,
    pub modes: Vec<Mode>,
}

impl ModalField {
    pub fn new(constant: f64, modes: Vec<Mode>) -> Self {
        ModalField { constant, modes }
    }

    pub fn constant(c: f64) -> Self {
        Self::new(c, Vec::new())
    }

    pub fn value(&self, x: f64, y: f64, t: f64) -> f64 {
        self.d(0, 0, 0, x, y, t)
    }

    pub fn d(&self, a: u32, b: u32, m: u32, x: f64, y: f64, t: f64) -> f64 {
        let base = if a + b + m == 0 { self.constant } else { 0.0 };
        base + self.modes.iter().map(|md| md.d(a, b, m, x, y, t)).sum::<f64>()
    }

    /// All derivatives at one point, sharing the trigonometric evaluations.
    fn jet(&self, x: f64, y: f64, t: f64) -> Jet<'_> {
        Jet {
            field: self,
            trig: self.modes.iter().map(|m| m.trig(x, y, t)).collect(),
        }
    }
}

struct Jet<'a> {
    field: &'a ModalField,
    trig: Vec<Trig>,
}

impl Jet<'_> {
    fn d(&self, a: u32, b: u32, m: u32) -> f64 {
        let base = if a + b + m == 0 { self.field.constant } else { 0.0 };
        base + self.field.modes.iter().zip(&self.trig).map(|(md, tr)| tr.d(md, a, b, m)).sum::<f64>()
    }
}

/// Forcing of the three evolution equations at one point.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PointForcing {
    pub momentum: [f64; 2],
    pub phase: f64,
    pub tensor: [[f64; 2]; 2],
}

/// A manufactured solution `(u, p, φ, F)` with its model parameters.
/// The velocity derives from a stream function `ψ`, `u = (∂ᵧψ, −∂ₓψ)`, so it
/// is divergence-free identically.
#[derive(Clone, Debug, PartialEq)]
pub struct MmsCase {
    pub name: String,
    pub params: ModelParams,
    pub psi: ModalField,
    pub p: ModalField,
    pub phi: ModalField,
    /// `F11, F12, F21, F22`.
    pub f: [ModalField; 4],
}

const K: f64 = 2.0 * PI;

fn mms_params() -> ModelParams {
    ModelParams {
        rho: 1.0,
        lambda: 0.01,
        gamma: 1.0,
        tau: 0.01,
        lambda_e: 0.1,
        h: 0.05,
        alpha: 0.01,
        beta: 1.0,
        eta: Coefficient {
            profile: Profile::Smoothstep,
            min: 0.02,
            max: 0.05,
        },
        kappa: Coefficient {
            profile: Profile::Smoothstep,
            min: 0.05,
            max: 1.0,
        },
        stabilization: None,
        fault: Default::default(),
    }
}

fn identity() -> [ModalField; 4] {
    [
        ModalField::constant(1.0),
        ModalField::constant(0.0),
        ModalField::constant(0.0),
        ModalField::constant(1.0),
    ]
}

/// Angular frequency of the canonical cases.
pub const OMEGA: f64 = 20.0;

impl MmsCase {
    /// Forced Taylor–Green vortex, constant `φ`, `F = I`.
    pub fn taylor_green() -> Self {
        MmsCase {
            name: "taylor-green".into(),
            params: mms_params(),
            psi: ModalField::new(0.0, vec![Mode::new(0.5 / K, K, K).phases(-FRAC_PI_2, -FRAC_PI_2).time(OMEGA, 0.0)]),
            p: ModalField::new(0.0, vec![Mode::new(0.1, 2.0 * K, 0.0).time(OMEGA, 0.3), Mode::new(0.1, 0.0, 2.0 * K).time(OMEGA, 0.3)]),
            phi: ModalField::constant(0.4),
            f: identity(),
        }
    }

    /// Pure Cahn–Hilliard: `u = 0`, `F = I`, oscillating `φ`.
    pub fn spinodal() -> Self {
        MmsCase {
            name: "spinodal".into(),
            params: mms_params(),
            psi: ModalField::constant(0.0),
            p: ModalField::constant(0.0),
            phi: ModalField::new(
                0.5,
                vec![
                    Mode::new(0.2, K, K).phases(0.4, 0.0).time(OMEGA, 0.2),
                    Mode::new(0.05, 2.0 * K, 0.0).phases(-FRAC_PI_2, 0.0),
                ],
            ),
            f: identity(),
        }
    }

    /// Steady swirl transporting a non-trivial `F`, constant `φ`.
    pub fn swirl() -> Self {
        let mut f = identity();
        f[0].modes.push(Mode::new(0.1, K, K).phases(0.0, -FRAC_PI_2).time(OMEGA, 0.0));
        f[1].modes.push(Mode::new(0.05, 0.0, K).phases(0.0, 1.0));
        f[2].modes.push(Mode::new(0.1, K, 0.0).phases(-FRAC_PI_2, 0.0).time(OMEGA, 1.0));
        f[3].modes.push(Mode::new(-0.1, K, K).phases(0.0, -FRAC_PI_2).time(OMEGA, 0.0));
        MmsCase {
            name: "swirl".into(),
            params: mms_params(),
            psi: ModalField::new(0.0, vec![Mode::new(0.5 / K, K, K).phases(-FRAC_PI_2, -FRAC_PI_2)]),
            p: ModalField::constant(0.0),
            phi: ModalField::constant(0.3),
            f,
        }
    }

    /// All fields time-dependent and coupled through every term.
    pub fn coupled() -> Self {
        let mut c = Self::swirl();
        c.name = "coupled".into();
        c.psi = ModalField::new(
            0.0,
            vec![
                Mode::new(0.5 / K, K, K).phases(-FRAC_PI_2, -FRAC_PI_2).time(OMEGA, 0.0),
                Mode::new(0.1 / K, 0.0, K).phases(0.0, 0.3).time(OMEGA, 1.0),
            ],
        );
        c.p = ModalField::new(0.0, vec![Mode::new(0.1, 2.0 * K, 0.0).time(OMEGA, 0.3), Mode::new(0.05, K, K).phases(0.5, -0.2)]);
        c.phi = Self::spinodal().phi;
        c
    }

    pub fn by_name(name: &str) -> Option<Self> {
        match name {
            "taylor-green" => Some(Self::taylor_green()),
            "spinodal" => Some(Self::spinodal()),
            "swirl" => Some(Self::swirl()),
            "coupled" => Some(Self::coupled()),
            _ => None,
        }
    }

    pub fn names() -> [&'static str; 4] {
        ["taylor-green", "spinodal", "swirl", "coupled"]
    }

    /// Same fields frozen at `t = 0`.
    pub fn steady(&self) -> Self {
        let freeze = |f: &ModalField| ModalField {
            constant: f.constant,
            modes: f
                .modes
                .iter()
                .map(|m| Mode {
                    c: m.c * m.pt.cos(),
                    omega: 0.0,
                    pt: 0.0,
                    ..*m
                })
                .collect(),
        };
        MmsCase {
            name: format!("{}-steady", self.name),
            params: self.params,
            psi: freeze(&self.psi),
            p: freeze(&self.p),
            phi: freeze(&self.phi),
            f: [freeze(&self.f[0]), freeze(&self.f[1]), freeze(&self.f[2]), freeze(&self.f[3])],
        }
    }

    pub fn grid(&self, n: usize) -> Result<GridSpec> {
        GridSpec::unit_square(n, BcMode::Periodic)
    }

    /// `∂ₓᵃ ∂ᵧᵇ ∂ₜᵐ u_comp`.
    #[cfg(test)]
    fn du(&self, comp: usize, a: u32, b: u32, m: u32, x: f64, y: f64, t: f64) -> f64 {
        if comp == 0 {
            self.psi.d(a, b + 1, m, x, y, t)
        } else {
            -self.psi.d(a + 1, b, m, x, y, t)
        }
    }

    pub fn velocity(&self, x: f64, y: f64, t: f64) -> [f64; 2] {
        [self.psi.d(0, 1, 0, x, y, t), -self.psi.d(1, 0, 0, x, y, t)]
    }

    /// Closed-form forcing.
    pub fn forcing_at(&self, x: f64, y: f64, t: f64) -> PointForcing {
        let p = &self.params;
        let (jpsi, jphi, jp) = (self.psi.jet(x, y, t), self.phi.jet(x, y, t), self.p.jet(x, y, t));
        let jf = [self.f[0].jet(x, y, t), self.f[1].jet(x, y, t), self.f[2].jet(x, y, t), self.f[3].jet(x, y, t)];
        let ph = |a, b, m| jphi.d(a, b, m);
        let fd = |c: usize, a, b, m| jf[c].d(a, b, m);
        let vel = |comp: usize, a: u32, b: u32, m: u32| if comp == 0 { jpsi.d(a, b + 1, m) } else { -jpsi.d(a + 1, b, m) };
        let u = [vel(0, 0, 0, 0), vel(1, 0, 0, 0)];
        let phi = ph(0, 0, 0);
        let gphi = [ph(1, 0, 0), ph(0, 1, 0)];
        let lap_phi = ph(2, 0, 0) + ph(0, 2, 0);
        let bilap_phi = ph(4, 0, 0) + 2.0 * ph(2, 2, 0) + ph(0, 4, 0);
        let fv: Vec<f64> = (0..4).map(|c| fd(c, 0, 0, 0)).collect();
        let fm = [[fv[0], fv[1]], [fv[2], fv[3]]];
        let tr = fv.iter().map(|v| v * v).sum::<f64>() - 2.0;
        let mut lap_tr = 0.0;
        for c in 0..4 {
            let g2 = fd(c, 1, 0, 0).powi(2) + fd(c, 0, 1, 0).powi(2);
            lap_tr += 2.0 * (g2 + fv[c] * (fd(c, 2, 0, 0) + fd(c, 0, 2, 0)));
        }
        let lg = p.lambda * p.gamma;
        let mu = -p.lambda * lap_phi + lg * double_well_prime(phi, p.h) - 0.5 * p.lambda_e * tr;
        let lap_mu = -p.lambda * bilap_phi
            + lg * (double_well_third(phi, p.h) * (gphi[0].powi(2) + gphi[1].powi(2)) + double_well_second(phi, p.h) * lap_phi)
            - 0.5 * p.lambda_e * lap_tr;
        let phase = ph(0, 0, 1) + u[0] * gphi[0] + u[1] * gphi[1] - p.tau * lap_mu;

        // ∂_b F_ak as dfx[b][a][k]
        let dfx = |b: usize, a: usize, k: usize| {
            let c = 2 * a + k;
            if b == 0 {
                fd(c, 1, 0, 0)
            } else {
                fd(c, 0, 1, 0)
            }
        };
        let du = |a: usize, b: usize| if b == 0 { vel(a, 1, 0, 0) } else { vel(a, 0, 1, 0) };
        let mut tensor = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                let c = 2 * a + b;
                let adv = u[0] * fd(c, 1, 0, 0) + u[1] * fd(c, 0, 1, 0);
                let stretch = du(a, 0) * fm[0][b] + du(a, 1) * fm[1][b];
                tensor[a][b] = fd(c, 0, 0, 1) + adv - stretch;
            }
        }

        let eta = p.eta(phi);
        let deta = p.eta.derivative(phi);
        let drag = p.drag_coefficient(phi);
        let gp = [jp.d(1, 0, 0), jp.d(0, 1, 0)];
        let mut momentum = [0.0; 2];
        for a in 0..2 {
            let dt_u = vel(a, 0, 0, 1);
            let conv = u[0] * du(a, 0) + u[1] * du(a, 1);
            let lap_u = vel(a, 2, 0, 0) + vel(a, 0, 2, 0);
            let visc = deta * (gphi[0] * du(a, 0) + gphi[1] * du(a, 1)) + eta * lap_u;
            let mut div_sigma = 0.0;
            for b in 0..2 {
                let ffm = fm[a][0] * fm[b][0] + fm[a][1] * fm[b][1] - if a == b { 1.0 } else { 0.0 };
                let dff: f64 = (0..2).map(|k| dfx(b, a, k) * fm[b][k] + fm[a][k] * dfx(b, b, k)).sum();
                div_sigma += -gphi[b] * ffm + (1.0 - phi) * dff;
            }
            div_sigma *= p.lambda_e;
            momentum[a] = p.rho * (dt_u + conv) + gp[a] - visc + drag * u[a] - (mu + 0.5 * p.lambda_e * tr) * gphi[a] - div_sigma;
        }
        PointForcing { momentum, phase, tensor }
    }

    /// Forcing by sixth-order central differences of field values.
    pub fn forcing_fd(&self, x: f64, y: f64, t: f64, step: f64) -> PointForcing {
        let p = &self.params;
        // fields as plain value functions
        let psi = |x: f64, y: f64, t: f64| self.psi.value(x, y, t);
        let u = |a: usize, x: f64, y: f64, t: f64| {
            if a == 0 {
                d1(&|s| psi(x, s, t), y, step)
            } else {
                -d1(&|s| psi(s, y, t), x, step)
            }
        };
        let phi = |x: f64, y: f64, t: f64| self.phi.value(x, y, t);
        let fc = |c: usize, x: f64, y: f64, t: f64| self.f[c].value(x, y, t);
        let tr = |x: f64, y: f64, t: f64| (0..4).map(|c| fc(c, x, y, t).powi(2)).sum::<f64>() - 2.0;
        let lap = |f: &dyn Fn(f64, f64) -> f64, x: f64, y: f64| d2(&|s| f(s, y), x, step) + d2(&|s| f(x, s), y, step);
        let grad = |f: &dyn Fn(f64, f64) -> f64, x: f64, y: f64| [d1(&|s| f(s, y), x, step), d1(&|s| f(x, s), y, step)];
        let mu = |x: f64, y: f64| {
            let ph = phi(x, y, t);
            -p.lambda * lap(&|x, y| phi(x, y, t), x, y) + p.lambda * p.gamma * double_well_prime(ph, p.h) - 0.5 * p.lambda_e * tr(x, y, t)
        };

        let uv = [u(0, x, y, t), u(1, x, y, t)];
        let gphi = grad(&|x, y| phi(x, y, t), x, y);
        let phase = d1(&|s| phi(x, y, s), t, step) + uv[0] * gphi[0] + uv[1] * gphi[1] - p.tau * lap(&mu, x, y);

        let mut tensor = [[0.0; 2]; 2];
        for a in 0..2 {
            let gu = grad(&|x, y| u(a, x, y, t), x, y);
            for b in 0..2 {
                let c = 2 * a + b;
                let gf = grad(&|x, y| fc(c, x, y, t), x, y);
                tensor[a][b] = d1(&|s| fc(c, x, y, s), t, step) + uv[0] * gf[0] + uv[1] * gf[1]
                    - (gu[0] * fc(b, x, y, t) + gu[1] * fc(2 + b, x, y, t));
            }
        }

        let sigma = |a: usize, b: usize, x: f64, y: f64| {
            let f = |r: usize, k: usize| fc(2 * r + k, x, y, t);
            let ffm = f(a, 0) * f(b, 0) + f(a, 1) * f(b, 1) - if a == b { 1.0 } else { 0.0 };
            p.lambda_e * (1.0 - phi(x, y, t)) * ffm
        };
        let mut momentum = [0.0; 2];
        let m = mu(x, y);
        let ph = phi(x, y, t);
        for a in 0..2 {
            let gu = grad(&|x, y| u(a, x, y, t), x, y);
            let dt_u = d1(&|s| u(a, x, y, s), t, step);
            // ∇·(η ∇u_a) in conservative form
            let flux_x = |x: f64, y: f64| p.eta(phi(x, y, t)) * d1(&|s| u(a, s, y, t), x, step);
            let flux_y = |x: f64, y: f64| p.eta(phi(x, y, t)) * d1(&|s| u(a, x, s, t), y, step);
            let visc = d1(&|s| flux_x(s, y), x, step) + d1(&|s| flux_y(x, s), y, step);
            let div_sigma = d1(&|s| sigma(a, 0, s, y), x, step) + d1(&|s| sigma(a, 1, x, s), y, step);
            let gp = grad(&|x, y| self.p.value(x, y, t), x, y);
            momentum[a] = p.rho * (dt_u + uv[0] * gu[0] + uv[1] * gu[1]) + gp[a] - visc + p.drag_coefficient(ph) * uv[a]
                - (m + 0.5 * p.lambda_e * tr(x, y, t)) * gphi[a]
                - div_sigma;
        }
        PointForcing { momentum, phase, tensor }
    }

    /// Largest relative mismatch between [`Self::forcing_at`] and
    /// [`Self::forcing_fd`] over `samples` random space-time points.
    pub fn validate_forcing(&self, samples: usize, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..samples {
            let (x, y, t) = (rng.random::<f64>(), rng.random::<f64>(), rng.random::<f64>());
            let a = self.forcing_at(x, y, t);
            let b = self.forcing_fd(x, y, t, 5e-3);
            let pairs = [
                (a.momentum[0], b.momentum[0]),
                (a.momentum[1], b.momentum[1]),
                (a.phase, b.phase),
                (a.tensor[0][0], b.tensor[0][0]),
                (a.tensor[0][1], b.tensor[0][1]),
                (a.tensor[1][0], b.tensor[1][0]),
                (a.tensor[1][1], b.tensor[1][1]),
            ];
            for (e, f) in pairs {
                worst = worst.max((e - f).abs() / (1.0 + e.abs()));
            }
        }
        worst
    }

    /// Exact fields sampled on `g` at time `t` (velocity from the discrete
    /// stream function, hence discretely divergence-free).
    pub fn sample(&self, g: &GridSpec, t: f64) -> (MacVelocity, ScalarField, ScalarField, TensorField) {
        let u = MacVelocity::from_stream_function(g, |x, y| self.psi.value(x, y, t));
        let p = ScalarField::from_fn(g, |x, y| self.p.value(x, y, t));
        let phi = ScalarField::from_fn(g, |x, y| self.phi.value(x, y, t));
        let f = TensorField::from_fn(g, |x, y| {
            let v = |c: usize| self.f[c].value(x, y, t);
            [[v(0), v(1)], [v(2), v(3)]]
        });
        (u, p, phi, f)
    }

    pub fn initial_state(&self, g: &GridSpec) -> Result<SimState> {
        let (u, p, phi, f) = self.sample(g, 0.0);
        let mut s = SimState::new(u, phi, f, &self.params)?;
        s.p = p;
        Ok(s)
    }
}

const D1: [f64; 3] = [45.0, -9.0, 1.0];
const D2: [f64; 3] = [270.0, -27.0, 2.0];

fn d1(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let mut s = 0.0;
    for (k, w) in D1.iter().enumerate() {
        let o = (k + 1) as f64 * h;
        s += w * (f(x + o) - f(x - o));
    }
    s / (60.0 * h)
}

fn d2(f: &dyn Fn(f64) -> f64, x: f64, h: f64) -> f64 {
    let mut s = -490.0 * f(x);
    for (k, w) in D2.iter().enumerate() {
        let o = (k + 1) as f64 * h;
        s += w * (f(x + o) + f(x - o));
    }
    s / (180.0 * h * h)
}

/// Sources of a manufactured solution sampled on a grid.
#[derive(Clone, Debug)]
struct Sampled {
    key: (u64, GridSpec),
    phase: ScalarField,
    tensor: TensorField,
    momentum: MacVelocity,
}

/// Sources of a manufactured solution for the time loop. The two most
/// recent time levels are cached, since every step queries both.
#[derive(Debug)]
pub struct CaseForcing<'a> {
    case: &'a MmsCase,
    cache: Mutex<Vec<Sampled>>,
}

impl<'a> CaseForcing<'a> {
    pub fn new(case: &'a MmsCase) -> Self {
        CaseForcing {
            case,
            cache: Mutex::new(Vec::new()),
        }
    }

    fn sampled(&self, g: &GridSpec, t: f64) -> Sampled {
        let key = (t.to_bits(), *g);
        let mut cache = self.cache.lock().unwrap_or_else(|e| e.into_inner());
        if let Some(s) = cache.iter().find(|s| s.key == key) {
            return s.clone();
        }
        let c = self.case;
        let mut phase = ScalarField::zeros(g);
        let mut tensor = TensorField::zeros(g);
        for j in 0..g.ny {
            for i in 0..g.nx {
                let (x, y) = g.cell_center(i, j);
                let f = c.forcing_at(x, y, t);
                phase.set(i, j, f.phase);
                tensor.set(g.cell(i, j), f.tensor);
            }
        }
        let momentum = MacVelocity::from_fn(g, |x, y| c.forcing_at(x, y, t).momentum[0], |x, y| c.forcing_at(x, y, t).momentum[1]);
        let s = Sampled {
            key,
            phase,
            tensor,
            momentum,
        };
        if cache.len() >= 2 {
            cache.remove(0);
        }
        cache.push(s.clone());
        s
    }
}

impl Forcing for CaseForcing<'_> {
    fn phase_source(&self, g: &GridSpec, t: f64) -> Option<ScalarField> {
        Some(self.sampled(g, t).phase)
    }

    fn tensor_source(&self, g: &GridSpec, t: f64) -> Option<TensorField> {
        Some(self.sampled(g, t).tensor)
    }

    fn momentum_source(&self, g: &GridSpec, t: f64) -> Option<MacVelocity> {
        Some(self.sampled(g, t).momentum)
    }
}

/// Discrete L² (volume-weighted) and L∞ error of one field.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ErrorNorms {
    pub l2: f64,
    pub linf: f64,
}

fn norms(diff: &[f64], vol: f64) -> ErrorNorms {
    ErrorNorms {
        l2: (vol * diff.iter().map(|d| d * d).sum::<f64>()).sqrt(),
        linf: diff.iter().fold(0.0, |m, d| m.max(d.abs())),
    }
}

/// Errors at the final time.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct MmsErrors {
    pub u: ErrorNorms,
    /// Pressure error after removing the mean of both fields.
    pub p: ErrorNorms,
    pub phi: ErrorNorms,
    pub f: ErrorNorms,
}

impl MmsErrors {
    pub const FIELDS: [&'static str; 4] = ["u", "p", "phi", "F"];

    pub fn get(&self, field: &str) -> Option<ErrorNorms> {
        match field {
            "u" => Some(self.u),
            "p" => Some(self.p),
            "phi" => Some(self.phi),
            "F" => Some(self.f),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct MmsOptions {
    pub advection: Advection,
    pub tol: f64,
    /// Evaluate the energy identity after every step.
    pub track_energy: bool,
}

impl Default for MmsOptions {
    fn default() -> Self {
        MmsOptions {
            advection: Advection::Centered,
            tol: 1e-12,
            track_energy: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct MmsRun {
    pub n: usize,
    pub dt: f64,
    pub steps: usize,
    pub errors: MmsErrors,
    /// Largest `|residual|` of the energy identity over the run.
    pub energy_residual: Option<f64>,
    pub state: SimState,
}

/// Compares a discrete state against the exact solution at `t`.
pub fn measure(case: &MmsCase, s: &SimState, t: f64) -> MmsErrors {
    let g = *s.grid();
    let vol = g.cell_volume();
    let mut du = Vec::with_capacity(g.n_xfaces() + g.n_yfaces());
    for j in 0..g.ny {
        for i in 0..g.nfx() {
            let (x, y) = g.xface_center(i, j);
            du.push(s.u.u()[g.xface(i, j)] - case.velocity(x, y, t)[0]);
        }
    }
    for j in 0..g.nfy() {
        for i in 0..g.nx {
            let (x, y) = g.yface_center(i, j);
            du.push(s.u.v()[g.yface(i, j)] - case.velocity(x, y, t)[1]);
        }
    }
    let (_, pe, phie, fe) = case.sample(&g, t);
    let (pm, pem) = (mean_value(&s.p), mean_value(&pe));
    let dp: Vec<f64> = s.p.values().iter().zip(pe.values()).map(|(a, b)| (a - pm) - (b - pem)).collect();
    let dphi: Vec<f64> = s.phi.sub(&phie).into_values();
    let df: Vec<f64> = s.f.sub(&fe).components().iter().flatten().copied().collect();
    MmsErrors {
        u: norms(&du, vol),
        p: norms(&dp, vol),
        phi: norms(&dphi, vol),
        f: norms(&df, vol),
    }
}

/// Runs the forced problem from the exact initial data with a fixed step
/// (the last step is shortened to land on `t_end`).
pub fn mms_run(case: &MmsCase, n: usize, dt: f64, t_end: f64, opts: &MmsOptions) -> Result<MmsRun> {
    let g = case.grid(n)?;
    let forcing = CaseForcing::new(case);
    let mut state = case.initial_state(&g)?;
    let ctrl = StepControl {
        dt,
        ch_tol: opts.tol,
        visc_tol: opts.tol,
        proj_tol: opts.tol,
        max_iter: 50_000,
        advection: opts.advection,
        retry: false,
        ..StepControl::default()
    };
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let mut energy: Option<f64> = opts.track_energy.then_some(0.0);
    for k in 0..steps {
        let h = if k + 1 == steps { t_end - state.t } else { dt };
        let (next, _) = step(&state, &case.params, &StepControl { dt: h, ..ctrl }, &forcing)?;
        if let Some(e) = energy.as_mut() {
            *e = e.max(energy_budget(&next, &state, &case.params, &forcing).residual.abs());
        }
        state = next;
    }
    Ok(MmsRun {
        n,
        dt,
        steps,
        errors: measure(case, &state, state.t),
        energy_residual: energy,
        state,
    })
}

/// One level of a refinement study.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StudyLevel {
    pub n: usize,
    pub dt: f64,
    /// Refinement parameter of the level (`h` in space, `dt` in time).
    pub h: f64,
    pub errors: MmsErrors,
    pub energy_residual: Option<f64>,
}

/// Errors and observed orders of a spatial or temporal refinement study.
#[derive(Clone, Debug, PartialEq)]
pub struct MmsStudy {
    pub case: String,
    /// `"space"` or `"time"`.
    pub kind: &'static str,
    pub levels: Vec<StudyLevel>,
}

impl MmsStudy {
    /// Observed `L²` order of `field` (one of [`MmsErrors::FIELDS`]).
    pub fn order(&self, field: &str) -> std::result::Result<OrderFit, VerifyError> {
        let data: Option<Vec<(f64, f64)>> = self.levels.iter().map(|l| l.errors.get(field).map(|e| (l.h, e.l2))).collect();
        observed_order(&data.ok_or_else(|| VerifyError::Input(format!("unknown field `{field}`")))?)
    }

    /// Observed order of the largest energy-identity residual, when tracked.
    pub fn energy_order(&self) -> Option<std::result::Result<OrderFit, VerifyError>> {
        let data: Option<Vec<(f64, f64)>> = self.levels.iter().map(|l| l.energy_residual.map(|r| (l.h, r))).collect();
        data.map(|d| observed_order(&d))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("kind,n,dt,u_l2,p_l2,phi_l2,F_l2,u_linf,p_linf,phi_linf,F_linf,energy_residual\n");
        for l in &self.levels {
            let e = &l.errors;
            let r = l.energy_residual.map(|r| format!("{r:e}")).unwrap_or_default();
            let _ = writeln!(
                s,
                "{},{},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{r}",
                self.kind, l.n, l.dt, e.u.l2, e.p.l2, e.phi.l2, e.f.l2, e.u.linf, e.p.linf, e.phi.linf, e.f.linf
            );
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = format!("{} refinement, case {}\n", self.kind, self.case);
        for l in &self.levels {
            let e = &l.errors;
            let _ = writeln!(
                s,
                "  n {:>4} dt {:.3e}: u {:.3e} p {:.3e} phi {:.3e} F {:.3e}",
                l.n, l.dt, e.u.l2, e.p.l2, e.phi.l2, e.f.l2
            );
        }
        for f in MmsErrors::FIELDS {
            if let Ok(fit) = self.order(f) {
                let flag = if fit.flagged { " (flagged)" } else { "" };
                let _ = writeln!(s, "  order {f}: {:.3}{flag}", fit.order);
            }
        }
        if let Some(Ok(fit)) = self.energy_order() {
            let _ = writeln!(s, "  order energy residual: {:.3}", fit.order);
        }
        s
    }
}

/// Runs `case` on each `n` with `dt = dt_scale · h²` to `t_end`.
pub fn spatial_study(case: &MmsCase, n_list: &[usize], dt_scale: f64, t_end: f64, opts: &MmsOptions) -> std::result::Result<MmsStudy, VerifyError> {
    let mut levels = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let h = 1.0 / n as f64;
        let run = mms_run(case, n, dt_scale * h * h, t_end, opts)?;
        levels.push(StudyLevel {
            n,
            dt: run.dt,
            h,
            errors: run.errors,
            energy_residual: run.energy_residual,
        });
    }
    Ok(MmsStudy {
        case: case.name.clone(),
        kind: "space",
        levels,
    })
}

/// Runs `case` on a fixed `n²` grid for each step in `dt_list`, tracking the
/// energy-identity residual.
pub fn temporal_study(case: &MmsCase, n: usize, dt_list: &[f64], t_end: f64, opts: &MmsOptions) -> std::result::Result<MmsStudy, VerifyError> {
    let opts = MmsOptions { track_energy: true, ..*opts };
    let mut levels = Vec::with_capacity(dt_list.len());
    for &dt in dt_list {
        let run = mms_run(case, n, dt, t_end, &opts)?;
        levels.push(StudyLevel {
            n,
            dt,
            h: dt,
            errors: run.errors,
            energy_residual: run.energy_residual,
        });
    }
    Ok(MmsStudy {
        case: case.name.clone(),
        kind: "time",
        levels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_derivatives_match_differences() {
        let m = Mode::new(0.7, 3.0, 2.0).phases(0.3, -0.4).time(5.0, 0.1);
        let f = ModalField::new(0.2, vec![m]);
        let (x, y, t) = (0.31, 0.77, 0.12);
        let fx = d1(&|s| f.value(s, y, t), x, 1e-3);
        assert!((fx - f.d(1, 0, 0, x, y, t)).abs() < 1e-10);
        let fyy = d2(&|s| f.value(x, s, t), y, 1e-3);
        assert!((fyy - f.d(0, 2, 0, x, y, t)).abs() < 1e-7);
        let ft = d1(&|s| f.value(x, y, s), t, 1e-3);
        assert!((ft - f.d(0, 0, 1, x, y, t)).abs() < 1e-9);
    }

    #[test]
    fn velocity_is_divergence_free() {
        let c = MmsCase::coupled();
        for &(x, y, t) in &[(0.1, 0.2, 0.3), (0.7, 0.4, 0.05)] {
            let div = c.du(0, 1, 0, 0, x, y, t) + c.du(1, 0, 1, 0, x, y, t);
            assert!(div.abs() < 1e-13);
        }
    }

    #[test]
    fn steady_case_freezes_time() {
        let c = MmsCase::coupled().steady();
        assert_eq!(c.phi.d(0, 0, 1, 0.3, 0.2, 0.7), 0.0);
        let full = MmsCase::coupled();
        assert!((c.phi.value(0.3, 0.2, 5.0) - full.phi.value(0.3, 0.2, 0.0)).abs() < 1e-15);
    }

    #[test]
    fn sample_is_exact_at_cell_centres() {
        let c = MmsCase::spinodal();
        let g = c.grid(8).unwrap();
        let s = c.initial_state(&g).unwrap();
        let e = measure(&c, &s, 0.0);
        assert_eq!(e.phi.linf, 0.0);
        assert_eq!(e.f.linf, 0.0);
    }
}
