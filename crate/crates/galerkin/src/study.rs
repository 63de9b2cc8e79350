//! Convergence of the Galerkin approximation in the number of modes,
//! measured against the grid solver on the same grid.

use std::fmt::Write as _;

use pfsi_core::config::RunConfig;
use pfsi_core::forcing::NoForcing;
use pfsi_core::presets::initial_state;
use pfsi_core::timeloop::{step, SimState, StepControl};

use crate::basis::{available_dimension, build_basis, build_basis_with, BasisKind, Route};
use crate::model::{integrate_galerkin, GalerkinBases};
use crate::GalerkinError;

/// `L²` distances between the lifted Galerkin solution with `(n_u, n_phi,
/// n_f)` modes and the grid solution at `t_end`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GalerkinRow {
    /// Requested truncation (`0` for the full dimension).
    pub n: usize,
    pub n_u: usize,
    pub n_phi: usize,
    pub n_f: usize,
    pub dist_u: f64,
    pub dist_phi: f64,
    pub dist_f: f64,
    /// `(|Δu|² + |Δφ|² + |ΔF|²)^{1/2}`.
    pub distance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GalerkinStudy {
    pub rows: Vec<GalerkinRow>,
    /// Distance between the grid solutions at `dt` and `dt/2`.
    pub grid_halving_gap: f64,
    /// Richardson estimate `2·gap` of the first-order time error of the grid
    /// solution at `dt`: the splitting-vs-RK4 discrepancy the full Galerkin
    /// system should reproduce.
    pub splitting_estimate: f64,
}

impl GalerkinStudy {
    /// Whether the distance never grows with `n` (up to `rel` relative slack).
    pub fn non_increasing(&self, rel: f64) -> bool {
        self.rows.windows(2).all(|w| w[1].distance <= w[0].distance * (1.0 + rel))
    }

    /// Distance of the full-dimension row over the splitting estimate.
    pub fn full_ratio(&self) -> Option<f64> {
        self.rows.iter().find(|r| r.n == 0).map(|r| r.distance / self.splitting_estimate)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("n,n_u,n_phi,n_f,dist_u,dist_phi,dist_F,distance\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{:e},{:e},{:e},{:e}", r.n, r.n_u, r.n_phi, r.n_f, r.dist_u, r.dist_phi, r.dist_f, r.distance);
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for r in &self.rows {
            let label = if r.n == 0 { "full".to_string() } else { r.n.to_string() };
            let _ = writeln!(
                s,
                "n = {label:>5} (u {}, phi {}, F {}): distance {:.4e} (u {:.3e}, phi {:.3e}, F {:.3e})",
                r.n_u, r.n_phi, r.n_f, r.distance, r.dist_u, r.dist_phi, r.dist_f
            );
        }
        let _ = writeln!(s, "grid dt-halving gap {:.4e}, splitting estimate {:.4e}", self.grid_halving_gap, self.splitting_estimate);
        if let Some(q) = self.full_ratio() {
            let _ = writeln!(s, "full-dimension distance / splitting estimate = {q:.3}");
        }
        s
    }
}

fn grid_run(s0: &SimState, cfg: &RunConfig, dt: f64, t_end: f64) -> Result<SimState, GalerkinError> {
    let p = cfg.model_params();
    let ctrl = StepControl {
        retry: false,
        ..cfg.step_control()
    };
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let mut s = s0.clone();
    for k in 0..steps {
        let h = if k + 1 == steps { t_end - s.t } else { dt };
        s = step(&s, &p, &StepControl { dt: h, ..ctrl }, &NoForcing)?.0;
    }
    Ok(s)
}

fn distance(a: (&pfsi_core::MacVelocity, &pfsi_core::ScalarField, &pfsi_core::TensorField), b: &SimState) -> [f64; 3] {
    [a.0.sub(&b.u).norm(), a.1.sub(&b.phi).norm(), a.2.sub(&b.f).norm()]
}

/// Runs the grid solver (at `dt` and `dt/2`) and the Galerkin system for every
/// truncation in `cfg.galerkin.n_list` on a `grid_n²` version of the
/// configured domain, starting from the configured initial state. Modes are
/// nested: each truncation is a prefix of the largest basis, and counts above
/// a basis' dimension are clamped to it.
pub fn convergence_study(cfg: &RunConfig) -> Result<GalerkinStudy, GalerkinError> {
    let gc = &cfg.galerkin;
    let n_list: Vec<usize> = gc.n_list.iter().map(|&n| n as usize).collect();
    let key = |n: usize| if n == 0 { usize::MAX } else { n };
    if n_list.is_empty() || n_list.windows(2).any(|w| key(w[1]) < key(w[0])) {
        return Err(GalerkinError::Input("galerkin.n_list must be non-empty and ascending (0 = full, last)".into()));
    }
    let mut c = cfg.clone();
    c.grid.nx = gc.grid_n as usize;
    c.grid.ny = gc.grid_n as usize;
    let g = c.grid;
    let s0 = initial_state(&c)?;
    let p = c.model_params();
    let scheme = c.solver.advection;

    let reference = grid_run(&s0, &c, gc.dt, gc.t_end)?;
    let half = grid_run(&s0, &c, 0.5 * gc.dt, gc.t_end)?;
    let grid_halving_gap = {
        let d = distance((&half.u, &half.phi, &half.f), &reference);
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    };

    let counts = |n: usize| -> [usize; 3] {
        [BasisKind::Stokes, BasisKind::NeumannScalar, BasisKind::Tensor].map(|k| {
            let avail = available_dimension(k, &g);
            if n == 0 {
                avail
            } else {
                n.min(avail)
            }
        })
    };
    let largest = counts(*n_list.last().expect("non-empty"));
    let tol = 1e-10;
    let build = |k: BasisKind, n: usize| {
        if n == available_dimension(k, &g) {
            build_basis_with(k, n, &g, tol, Route::Dense)
        } else {
            build_basis(k, n, &g, tol)
        }
    };
    let full = GalerkinBases::new(
        build(BasisKind::Stokes, largest[0])?,
        build(BasisKind::NeumannScalar, largest[1])?,
        build(BasisKind::Tensor, largest[2])?,
    )?;

    let mut rows = Vec::new();
    for &n in &n_list {
        let [nu, np, nf] = counts(n);
        let b = full.truncate(nu, np, nf)?;
        let init = b.project(&s0.u, &s0.phi, &s0.f)?;
        let traj = integrate_galerkin(&init, gc.t_end, gc.dt, &b, &p, scheme, usize::MAX)?;
        let (u, phi, f) = b.lift(traj.last())?;
        let [du, dp, df] = distance((&u, &phi, &f), &reference);
        rows.push(GalerkinRow {
            n,
            n_u: nu,
            n_phi: np,
            n_f: nf,
            dist_u: du,
            dist_phi: dp,
            dist_f: df,
            distance: (du * du + dp * dp + df * df).sqrt(),
        });
    }
    Ok(GalerkinStudy {
        rows,
        grid_halving_gap,
        splitting_estimate: 2.0 * grid_halving_gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use pfsi_core::config::Preset;

    #[test]
    fn rejects_descending_levels() {
        let mut cfg = RunConfig::default();
        cfg.galerkin.n_list = vec![0, 4];
        assert!(matches!(convergence_study(&cfg), Err(GalerkinError::Input(_))));
    }

    #[test]
    fn single_constant_mode_gives_zero_mean_part() {
        // with one scalar mode φₙ stays the mean, so its error is the norm of
        // the zero-mean part of the reference
        let mut cfg = RunConfig::default();
        cfg.initial.preset = Preset::Smooth;
        cfg.galerkin.grid_n = 6;
        cfg.galerkin.n_list = vec![1];
        cfg.galerkin.t_end = 0.002;
        cfg.galerkin.dt = 1e-3;
        let study = convergence_study(&cfg).unwrap();
        let mut c = cfg.clone();
        c.grid.nx = 6;
        c.grid.ny = 6;
        let s0 = initial_state(&c).unwrap();
        let r = grid_run(&s0, &c, 1e-3, 0.002).unwrap();
        let mean = pfsi_core::grid::ops::mean_value(&r.phi);
        let zero_mean = r.phi.map(|x| x - mean).norm();
        assert!((study.rows[0].dist_phi - zero_mean).abs() < 1e-12);
    }
}
