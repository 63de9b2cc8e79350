//! Named initial conditions.
//!
//! Interfaces are smooth `tanh` profiles of width `√2 h`. Thrombi touching
//! a wall are centred on it, so the even reflection across the wall leaves
//! `φ₀` unchanged and `∂ₙφ₀ = 0` holds by construction. Initial velocities
//! are projected once so that `u₀` is discretely divergence-free.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::checkpoint;
use crate::config::{Preset, RunConfig};
use crate::error::{Error, Result};
use crate::grid::{GridSpec, MacVelocity, ScalarField, TensorField};
use crate::momentum::project;
use crate::timeloop::SimState;

/// `φ = ½(1 − tanh((r − R)/(√2 h)))` around `(cx, cy)`: 1 inside, 0 outside.
pub fn disk(g: &GridSpec, cx: f64, cy: f64, radius: f64, h: f64) -> ScalarField {
    let w = std::f64::consts::SQRT_2 * h;
    ScalarField::from_fn(g, |x, y| {
        let r = ((x - cx).powi(2) + (y - cy).powi(2)).sqrt();
        0.5 * (1.0 - ((r - radius) / w).tanh())
    })
}

/// `mean + noise · U(−1, 1)` per cell from a seeded ChaCha8 stream.
pub fn spinodal_phi(g: &GridSpec, mean: f64, noise: f64, seed: u64) -> ScalarField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vals = (0..g.n_cells()).map(|_| mean + noise * rng.random_range(-1.0..1.0)).collect();
    ScalarField::from_values(g, vals).expect("length matches grid")
}

/// Parabolic streamwise profile `U·4y(ly − y)/ly²`, projected onto
/// divergence-free fields (the closed box turns it into a recirculation).
pub fn channel_flow(g: &GridSpec, speed: f64, tol: f64, max_iter: usize) -> Result<MacVelocity> {
    let ly = g.ly;
    let raw = MacVelocity::from_fn(g, |_, y| speed * 4.0 * y * (ly - y) / (ly * ly), |_, _| 0.0);
    Ok(project(&raw, 1.0, tol, max_iter, None)?.vel)
}

/// `mean + amplitude · cos(πx/lx) cos(πy/ly)`, the lowest non-constant
/// Neumann mode.
pub fn smooth_phi(g: &GridSpec, mean: f64, amplitude: f64) -> ScalarField {
    let (kx, ky) = (PI / g.lx, PI / g.ly);
    ScalarField::from_fn(g, |x, y| mean + amplitude * (kx * x).cos() * (ky * y).cos())
}

/// Vortex with stream function `U (L/π) sin²(πx/lx) sin²(πy/ly)`,
/// `L = min(lx, ly)`: discretely divergence-free and tangent to the walls.
pub fn smooth_vortex(g: &GridSpec, speed: f64) -> MacVelocity {
    let (kx, ky) = (PI / g.lx, PI / g.ly);
    let scale = speed * g.lx.min(g.ly) / PI;
    MacVelocity::from_stream_function(g, |x, y| scale * ((kx * x).sin() * (ky * y).sin()).powi(2))
}

/// Builds the initial state selected by `cfg.initial`.
pub fn initial_state(cfg: &RunConfig) -> Result<SimState> {
    let g = cfg.grid;
    g.validate()?;
    let p = cfg.model_params();
    let ic = &cfg.initial;
    let scale = g.lx.min(g.ly);
    let (u, phi) = match ic.preset {
        Preset::Rest => (MacVelocity::zeros(&g), ScalarField::constant(&g, ic.phi_mean)),
        Preset::Smooth => (smooth_vortex(&g, ic.flow_speed), smooth_phi(&g, ic.phi_mean, ic.noise)),
        Preset::Spinodal => (MacVelocity::zeros(&g), spinodal_phi(&g, ic.phi_mean, ic.noise, ic.seed)),
        Preset::Bubble => {
            let phi = disk(&g, ic.center[0] * g.lx, ic.center[1] * g.ly, ic.radius * scale, p.h);
            (MacVelocity::zeros(&g), phi)
        }
        Preset::ChannelThrombus => {
            let phi = disk(&g, ic.center[0] * g.lx, 0.0, ic.radius * scale, p.h);
            let u = channel_flow(&g, ic.flow_speed, cfg.solver.proj_tol, cfg.solver.max_iter as usize)?;
            (u, phi)
        }
        Preset::Checkpoint => {
            let path = ic
                .checkpoint
                .as_ref()
                .ok_or_else(|| Error::Config("initial.checkpoint: required when preset = \"checkpoint\"".into()))?;
            let (state, _) = checkpoint::load(path)?;
            if *state.grid() != g {
                return Err(Error::GridMismatch {
                    expected: format!("{g:?}"),
                    found: format!("{:?}", state.grid()),
                });
            }
            return Ok(state);
        }
    };
    SimState::new(u, phi, TensorField::identity(&g), &p)
}
