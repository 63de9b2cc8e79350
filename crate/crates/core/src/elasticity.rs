//! Deformation-gradient transport and the elastic terms it feeds into the
//! momentum balance and the chemical potential.

use crate::error::{Error, Result};
use crate::grid::ops::{advective_flux_into, divergence_into, lower, upper, xface_hi, yface_hi, Advection};
use crate::grid::{GridSpec, MacVelocity, ScalarField, TensorField};

/// Which velocity component a stencil entry reads.
#[derive(Clone, Copy)]
enum Comp {
    U,
    V,
}

/// Enumerates the linear stencil of the cell velocity gradient: for every
/// cell and tensor component `(a, b)` the callback receives the face it reads
/// and the weight. Shared by [`velocity_gradient`] and its adjoint so that the
/// two stay exact transposes.
fn gradient_stencil(g: &GridSpec, mut visit: impl FnMut(usize, usize, Comp, usize, f64)) {
    let (hx, hy) = (g.hx(), g.hy());
    let (nx, ny, bc) = (g.nx, g.ny, g.bc);
    for j in 0..ny {
        let jh = yface_hi(g, j);
        for i in 0..nx {
            let c = g.cell(i, j);
            let ih = xface_hi(g, i);
            // diagonal: compact face differences
            visit(c, 0, Comp::U, g.xface(i, j), -1.0 / hx);
            visit(c, 0, Comp::U, g.xface(ih, j), 1.0 / hx);
            visit(c, 3, Comp::V, g.yface(i, j), -1.0 / hy);
            visit(c, 3, Comp::V, g.yface(i, jh), 1.0 / hy);

            // ∂u/∂y from cell-averaged u; odd ghost at walls
            let w = 0.5 / (2.0 * hy);
            let ucell = |jj: usize, s: f64, visit: &mut dyn FnMut(usize, usize, Comp, usize, f64)| {
                visit(c, 1, Comp::U, g.xface(i, jj), s * w);
                visit(c, 1, Comp::U, g.xface(ih, jj), s * w);
            };
            match upper(j, ny, bc) {
                Some(ju) => ucell(ju, 1.0, &mut visit),
                None => ucell(j, -1.0, &mut visit),
            }
            match lower(j, ny, bc) {
                Some(jl) => ucell(jl, -1.0, &mut visit),
                None => ucell(j, 1.0, &mut visit),
            }

            // ∂v/∂x from cell-averaged v
            let w = 0.5 / (2.0 * hx);
            let vcell = |ii: usize, s: f64, visit: &mut dyn FnMut(usize, usize, Comp, usize, f64)| {
                visit(c, 2, Comp::V, g.yface(ii, j), s * w);
                visit(c, 2, Comp::V, g.yface(ii, jh), s * w);
            };
            match upper(i, nx, bc) {
                Some(iu) => vcell(iu, 1.0, &mut visit),
                None => vcell(i, -1.0, &mut visit),
            }
            match lower(i, nx, bc) {
                Some(il) => vcell(il, -1.0, &mut visit),
                None => vcell(i, 1.0, &mut visit),
            }
        }
    }
}

/// Cell-centred `[∇u]_{ab} = ∂u_a/∂x_b`. Diagonal entries are the compact
/// face differences, so the trace equals [`crate::grid::ops::divergence`]
/// exactly.
pub fn velocity_gradient(vel: &MacVelocity) -> TensorField {
    let g = *vel.grid();
    let mut out = TensorField::zeros(&g);
    let (u, v) = (vel.u(), vel.v());
    gradient_stencil(&g, |cell, comp, which, face, w| {
        let val = match which {
            Comp::U => u[face],
            Comp::V => v[face],
        };
        out.comps[comp][cell] += w * val;
    });
    out
}

/// Face field `w` with `⟨w, v⟩ = ⟨σ, velocity_gradient(v)⟩` for every `v`
/// vanishing on the walls (inner products volume weighted).
pub fn velocity_gradient_adjoint(sigma: &TensorField) -> MacVelocity {
    let g = *sigma.grid();
    let mut out = MacVelocity::zeros(&g);
    gradient_stencil(&g, |cell, comp, which, face, w| {
        let s = sigma.comps[comp][cell];
        match which {
            Comp::U => out.u[face] += w * s,
            Comp::V => out.v[face] += w * s,
        }
    });
    out.zero_boundary();
    out
}

/// Per cell `Σ_ab (F^{ab})² − d`, i.e. `tr(FFᵀ − I)`.
pub fn trace_elastic(f: &TensorField) -> ScalarField {
    let g = *f.grid();
    let c = f.components();
    let vals = (0..g.n_cells())
        .map(|k| c[0][k] * c[0][k] + c[1][k] * c[1][k] + c[2][k] * c[2][k] + c[3][k] * c[3][k] - 2.0)
        .collect();
    ScalarField::from_values(&g, vals).expect("length matches grid")
}

/// `max_cells |det F − 1|`.
pub fn det_drift(f: &TensorField) -> f64 {
    let c = f.components();
    (0..c[0].len()).fold(0.0, |m, k| m.max((c[0][k] * c[3][k] - c[1][k] * c[2][k] - 1.0).abs()))
}

/// Elastic stress `λₑ(1 − φ)(FFᵀ − I)` at cell centres.
pub fn elastic_stress(phi: &ScalarField, f: &TensorField, lambda_e: f64) -> Result<TensorField> {
    phi.grid().check_same(f.grid())?;
    let g = *f.grid();
    let mut s = TensorField::zeros(&g);
    for k in 0..g.n_cells() {
        let m = f.get(k);
        let w = lambda_e * (1.0 - phi.values()[k]);
        let mut out = [[0.0; 2]; 2];
        for (a, row) in out.iter_mut().enumerate() {
            for (b, o) in row.iter_mut().enumerate() {
                let ff_t = m[a][0] * m[b][0] + m[a][1] * m[b][1];
                *o = w * (ff_t - if a == b { 1.0 } else { 0.0 });
            }
        }
        s.set(k, out);
    }
    Ok(s)
}

/// Face force `∇·(λₑ(1 − φ)(FFᵀ − I))`, realised as the negative adjoint of
/// the discrete velocity gradient so that its work on a velocity equals
/// `−⟨σ, ∇_h u⟩` exactly.
pub fn elastic_stress_divergence(phi: &ScalarField, f: &TensorField, lambda_e: f64) -> Result<MacVelocity> {
    let sigma = elastic_stress(phi, f, lambda_e)?;
    Ok(velocity_gradient_adjoint(&sigma).scaled(-1.0))
}

/// Largest stable step for transport, `cfl · min h / max|u|`.
pub fn cfl_limit(vel: &MacVelocity, cfl: f64) -> f64 {
    let m = vel.max_abs();
    if m == 0.0 {
        f64::INFINITY
    } else {
        cfl * vel.grid().min_spacing() / m
    }
}

/// Courant number above which [`transport_step`] refuses to run.
pub const TRANSPORT_CFL: f64 = 0.9;

/// One forward-Euler step of `F_t + u·∇F = (∇u)F (+ source)` with flux-form
/// transport of each component.
pub fn transport_step(
    f: &TensorField,
    vel: &MacVelocity,
    dt: f64,
    scheme: Advection,
    source: Option<&TensorField>,
) -> Result<TensorField> {
    let g = *vel.grid();
    g.check_same(f.grid())?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Input(format!("time step must be positive, got {dt}")));
    }
    let umax = vel.max_abs();
    if dt * umax / g.min_spacing() > TRANSPORT_CFL {
        return Err(Error::Cfl {
            dt,
            suggested: cfl_limit(vel, 0.5),
        });
    }
    if umax == 0.0 && source.is_none() {
        return Ok(f.clone());
    }
    let rate = transport_rate(f, vel, scheme)?;
    let mut out = f.clone();
    for comp in 0..4 {
        let dst = &mut out.comps[comp];
        for (d, r) in dst.iter_mut().zip(&rate.comps[comp]) {
            *d += dt * r;
        }
        if let Some(s) = source {
            crate::grid::field::axpy(dst, dt, &s.comps[comp]);
        }
    }
    Ok(out)
}

/// Right-hand side `(∇u)F − ∇·(u ⊗ F)` of the transport equation, with the
/// flux-form transport of each component.
pub fn transport_rate(f: &TensorField, vel: &MacVelocity, scheme: Advection) -> Result<TensorField> {
    let g = *vel.grid();
    g.check_same(f.grid())?;
    let grad = velocity_gradient(vel);
    let mut out = TensorField::zeros(&g);
    let mut fu = vec![0.0; g.n_xfaces()];
    let mut fv = vec![0.0; g.n_yfaces()];
    let mut adv = vec![0.0; g.n_cells()];
    for comp in 0..4 {
        advective_flux_into(&g, vel.u(), vel.v(), &f.comps[comp], scheme, &mut fu, &mut fv);
        divergence_into(&g, &fu, &fv, &mut adv);
        let (a, b) = (comp / 2, comp % 2);
        let dst = &mut out.comps[comp];
        for k in 0..g.n_cells() {
            // (∇u F)_{ab} = Σ_k ∂_k u_a F_{kb}
            let src = grad.comps[2 * a][k] * f.comps[b][k] + grad.comps[2 * a + 1][k] * f.comps[2 + b][k];
            dst[k] = src - adv[k];
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ops::divergence;
    use crate::grid::BcMode;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_tensor(g: &GridSpec, seed: u64) -> TensorField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut f = TensorField::zeros(g);
        for c in 0..4 {
            f.comp_mut(c / 2, c % 2).iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        }
        f
    }

    fn random_velocity(g: &GridSpec, seed: u64) -> MacVelocity {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = MacVelocity::zeros(g);
        v.u_mut().iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        v.v_mut().iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        v.zero_boundary();
        v
    }

    #[test]
    fn uniform_velocity_has_zero_gradient() {
        let g = GridSpec::unit_square(8, BcMode::Periodic).unwrap();
        let vel = MacVelocity::from_fn(&g, |_, _| 1.3, |_, _| -0.4);
        let gr = velocity_gradient(&vel);
        assert!(gr.components().iter().flatten().all(|x| x.abs() < 1e-13));
    }

    #[test]
    fn shear_gradient_interior() {
        // u = (y, 0): only the (1,2) entry is non-zero away from the periodic seam.
        let g = GridSpec::unit_square(8, BcMode::Periodic).unwrap();
        let vel = MacVelocity::from_fn(&g, |_, y| y, |_, _| 0.0);
        let gr = velocity_gradient(&vel);
        for j in 1..g.ny - 1 {
            for i in 0..g.nx {
                let m = gr.get(g.cell(i, j));
                assert!((m[0][1] - 1.0).abs() < 1e-13);
                assert!(m[0][0].abs() < 1e-13 && m[1][0].abs() < 1e-13 && m[1][1].abs() < 1e-13);
            }
        }
    }

    #[test]
    fn trace_is_divergence() {
        for bc in [BcMode::Physical, BcMode::Periodic] {
            let g = GridSpec::new(1.0, 1.5, 7, 9, bc).unwrap();
            let vel = random_velocity(&g, 4);
            let gr = velocity_gradient(&vel);
            let d = divergence(&vel);
            for k in 0..g.n_cells() {
                assert!((gr.comp(0, 0)[k] + gr.comp(1, 1)[k] - d.values()[k]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn gradient_is_second_order_in_the_interior() {
        let err = |n: usize| {
            let g = GridSpec::unit_square(n, BcMode::Periodic).unwrap();
            let vel = MacVelocity::from_stream_function(&g, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).sin());
            let gr = velocity_gradient(&vel);
            let exact = TensorField::from_fn(&g, |x, y| {
                let (s, c) = ((2.0 * PI * x).sin(), (2.0 * PI * x).cos());
                let (sy, cy) = ((2.0 * PI * y).sin(), (2.0 * PI * y).cos());
                let k2 = 4.0 * PI * PI;
                // u = ψ_y, v = −ψ_x
                [[k2 * c * cy, -k2 * s * sy], [k2 * s * sy, -k2 * c * cy]]
            });
            gr.sub(&exact).components().iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()))
        };
        let (e1, e2) = (err(16), err(32));
        assert!((e1 / e2).log2() > 1.8, "{e1} {e2}");
    }

    #[test]
    fn trace_elastic_examples() {
        let g = GridSpec::unit_square(4, BcMode::Physical).unwrap();
        assert_eq!(trace_elastic(&TensorField::identity(&g)).max_abs(), 0.0);
        let t = trace_elastic(&TensorField::uniform(&g, [[2.0, 0.0], [0.0, 1.0]]));
        assert!(t.values().iter().all(|&x| x == 3.0));
        let a: f64 = 0.7;
        let rot = TensorField::uniform(&g, [[a.cos(), -a.sin()], [a.sin(), a.cos()]]);
        assert!(trace_elastic(&rot).max_abs() < 1e-15);
        assert!(det_drift(&rot) < 1e-15);
        assert_eq!(det_drift(&TensorField::identity(&g)), 0.0);
        assert_eq!(det_drift(&TensorField::uniform(&g, [[2.0, 0.0], [0.0, 0.5]])), 0.0);
    }

    #[test]
    fn transport_examples() {
        let g = GridSpec::unit_square(8, BcMode::Periodic).unwrap();
        let f = random_tensor(&g, 1);
        let zero = MacVelocity::zeros(&g);
        assert_eq!(transport_step(&f, &zero, 0.1, Advection::Upwind, None).unwrap(), f);

        let uni = MacVelocity::from_fn(&g, |_, _| 0.5, |_, _| 0.25);
        let cf = TensorField::uniform(&g, [[1.2, 0.3], [-0.1, 0.9]]);
        let out = transport_step(&cf, &uni, 0.01, Advection::Upwind, None).unwrap();
        assert!(out.sub(&cf).components().iter().flatten().all(|x| x.abs() < 1e-14));

        // F = I in a rotating flow: one step gives I + dt ∇u.
        let vel = MacVelocity::from_stream_function(&g, |x, y| (2.0 * PI * x).sin() * (2.0 * PI * y).sin() / 10.0);
        let dt = 1e-3;
        let id = TensorField::identity(&g);
        let out = transport_step(&id, &vel, dt, Advection::Upwind, None).unwrap();
        let mut expect = id.clone();
        expect.axpy(dt, &velocity_gradient(&vel));
        assert!(out.sub(&expect).components().iter().flatten().all(|x| x.abs() < 1e-15));
    }

    #[test]
    fn transport_rejects_cfl_violation() {
        let g = GridSpec::unit_square(8, BcMode::Periodic).unwrap();
        let vel = MacVelocity::from_fn(&g, |_, _| 2.0, |_, _| 0.0);
        let err = transport_step(&TensorField::identity(&g), &vel, 0.1, Advection::Upwind, None).unwrap_err();
        match err {
            Error::Cfl { suggested, .. } => assert!((suggested - 0.5 * 0.125 / 2.0).abs() < 1e-15),
            e => panic!("{e}"),
        }
    }

    #[test]
    fn elastic_force_examples() {
        let g = GridSpec::unit_square(8, BcMode::Physical).unwrap();
        let phi = ScalarField::from_fn(&g, |x, y| 0.5 + 0.3 * x * y);
        let id = TensorField::identity(&g);
        assert!(elastic_stress_divergence(&phi, &id, 2.0).unwrap().max_abs() < 1e-15);
        let one = ScalarField::constant(&g, 1.0);
        let f = random_tensor(&g, 2);
        assert_eq!(elastic_stress_divergence(&one, &f, 2.0).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn elastic_force_matches_analytic_divergence() {
        // Periodic 1D profile: φ = 0.5 + 0.2 sin(2πx), F = [[1 + ε s, 0], [ε s, 1]].
        let eps = 0.1;
        let err = |n: usize| {
            let g = GridSpec::unit_square(n, BcMode::Periodic).unwrap();
            let k = 2.0 * PI;
            let phi = ScalarField::from_fn(&g, |x, _| 0.5 + 0.2 * (k * x).sin());
            let f = TensorField::from_fn(&g, |x, _| [[1.0 + eps * (k * x).sin(), 0.0], [eps * (k * x).cos(), 1.0]]);
            let force = elastic_stress_divergence(&phi, &f, 1.0).unwrap();
            // σ11 = (1−φ)((1+εs)² − 1), σ21 = (1−φ)(1+εs)εc; f_x = ∂x σ11, f_y = ∂x σ21
            let sig11 = |x: f64| (0.5 - 0.2 * (k * x).sin()) * ((1.0 + eps * (k * x).sin()).powi(2) - 1.0);
            let sig21 = |x: f64| (0.5 - 0.2 * (k * x).sin()) * (1.0 + eps * (k * x).sin()) * eps * (k * x).cos();
            let d = |f: &dyn Fn(f64) -> f64, x: f64| (f(x + 1e-5) - f(x - 1e-5)) / 2e-5;
            let mut e: f64 = 0.0;
            for j in 0..g.ny {
                for i in 0..g.nx {
                    let (x, _) = g.xface_center(i, j);
                    e = e.max((force.u()[g.xface(i, j)] - d(&sig11, x)).abs());
                    let (x, _) = g.yface_center(i, j);
                    e = e.max((force.v()[g.yface(i, j)] - d(&sig21, x)).abs());
                }
            }
            e
        };
        let (e1, e2) = (err(32), err(64));
        assert!((e1 / e2).log2() > 1.8, "{e1} {e2}");
    }

    proptest! {
        #[test]
        fn adjoint_identity(seed in 0u64..500, periodic in any::<bool>()) {
            let bc = if periodic { BcMode::Periodic } else { BcMode::Physical };
            let g = GridSpec::new(1.0, 0.8, 6, 7, bc).unwrap();
            let sigma = random_tensor(&g, seed);
            let vel = random_velocity(&g, seed + 7);
            let lhs = velocity_gradient_adjoint(&sigma).dot(&vel);
            let rhs = sigma.dot(&velocity_gradient(&vel));
            prop_assert!((lhs - rhs).abs() < 1e-12 * (1.0 + lhs.abs()));
        }

        #[test]
        fn trace_bounds(seed in 0u64..500) {
            let g = GridSpec::unit_square(4, BcMode::Physical).unwrap();
            let f = random_tensor(&g, seed);
            let t = trace_elastic(&f);
            prop_assert!(t.values().iter().all(|&x| x >= -2.0));
        }

        #[test]
        fn frobenius_growth_bound(seed in 0u64..200) {
            // |F^{n+1}| ≤ (1 + dt C(u)) |F^n| with C from max|∇u| and the
            // upwind transport's contraction property.
            let g = GridSpec::unit_square(16, BcMode::Periodic).unwrap();
            let a = 0.05 + (seed % 10) as f64 * 0.01;
            let vel = MacVelocity::from_stream_function(&g, |x, y| a * (2.0 * PI * x).sin() * (2.0 * PI * y).sin());
            let f = random_tensor(&g, seed);
            let dt = 0.2 * g.min_spacing() / vel.max_abs();
            let out = transport_step(&f, &vel, dt, Advection::Upwind, None).unwrap();
            let grad = velocity_gradient(&vel);
            let gmax = grad.components().iter().flatten().fold(0.0f64, |m, x| m.max(x.abs()));
            let divmax = divergence(&vel).max_abs();
            let c = 2.0 * gmax + divmax / 2.0 + 1e-12;
            prop_assert!(out.norm() <= (1.0 + dt * c) * f.norm() * (1.0 + 1e-12));
        }
    }
}
