use pfsi_core::config::{Preset, RunConfig};
use pfsi_core::forcing::NoForcing;
use pfsi_core::grid::ops::divergence;
use pfsi_core::grid::{BcMode, GridSpec};
use pfsi_core::presets::initial_state;
use pfsi_core::timeloop::{step, StepControl};
use pfsi_galerkin::basis::{available_dimension, build_basis_with, Route};
use pfsi_galerkin::{build_basis, integrate_galerkin, BasisKind, GalerkinBases};
use proptest::prelude::*;

fn full_bases(g: &GridSpec) -> GalerkinBases {
    let b = |k| build_basis_with(k, available_dimension(k, g), g, 1e-10, Route::Dense).unwrap();
    GalerkinBases::new(b(BasisKind::Stokes), b(BasisKind::NeumannScalar), b(BasisKind::Tensor)).unwrap()
}

#[test]
fn full_dimension_galerkin_matches_grid_solver_at_first_order_in_dt() {
    // RK4 on the full space is the exact semi-discrete flow up to O(dt⁴); the
    // split grid solver differs from it at first order
    let mut cfg = RunConfig::default();
    cfg.grid.nx = 8;
    cfg.grid.ny = 8;
    cfg.initial.preset = Preset::Smooth;
    cfg.solver.ch_tol = 1e-13;
    cfg.solver.visc_tol = 1e-13;
    cfg.solver.proj_tol = 1e-13;
    let g = cfg.grid;
    let p = cfg.model_params();
    let s0 = initial_state(&cfg).unwrap();
    let b = full_bases(&g);
    let t_end = 4e-3;
    let traj = integrate_galerkin(&b.project(&s0.u, &s0.phi, &s0.f).unwrap(), t_end, 1e-4, &b, &p, cfg.solver.advection, usize::MAX).unwrap();
    let (u, phi, f) = b.lift(traj.last()).unwrap();
    let err = |dt: f64| {
        let ctrl = StepControl {
            dt,
            retry: false,
            ..cfg.step_control()
        };
        let mut s = s0.clone();
        for _ in 0..(t_end / dt).round() as usize {
            s = step(&s, &p, &ctrl, &NoForcing).unwrap().0;
        }
        (s.u.sub(&u).norm().powi(2) + s.phi.sub(&phi).norm().powi(2) + s.f.sub(&f).norm().powi(2)).sqrt()
    };
    let (e1, e2, e3) = (err(1e-3), err(5e-4), err(2.5e-4));
    let (r1, r2) = (e1 / e2, e2 / e3);
    assert!((1.7..2.3).contains(&r1) && (1.7..2.3).contains(&r2), "errors {e1:e} {e2:e} {e3:e}");
}

#[test]
fn iterative_stokes_modes_match_the_dense_route() {
    let g = GridSpec::unit_square(20, BcMode::Physical).unwrap();
    let it = build_basis_with(BasisKind::Stokes, 6, &g, 1e-9, Route::Iterative).unwrap();
    let de = build_basis_with(BasisKind::Stokes, 6, &g, 1e-9, Route::Dense).unwrap();
    for (a, b) in it.eigenvalues.iter().zip(&de.eigenvalues) {
        assert!((a - b).abs() < 1e-8 * b, "{a} vs {b}");
    }
    assert!(it.gram_error() < 1e-10);
    for k in 0..it.n() {
        let mut c = nalgebra::DVector::zeros(it.n());
        c[k] = 1.0;
        let v = it.lift_velocity(&c).unwrap();
        assert!(divergence(&v).max_abs() < 1e-9 * v.max_abs() / g.min_spacing());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(10))]

    #[test]
    fn bases_are_orthonormal_and_nested(nx in 4usize..8, ny in 4usize..8, lx in 0.5f64..2.0, periodic in any::<bool>()) {
        let bc = if periodic { BcMode::Periodic } else { BcMode::Physical };
        let g = GridSpec::new(lx, 1.0, nx, ny, bc).unwrap();
        for kind in [BasisKind::NeumannScalar, BasisKind::Tensor] {
            let n = available_dimension(kind, &g).min(12);
            let b = build_basis(kind, n, &g, 1e-10).unwrap();
            prop_assert!(b.gram_error() < 1e-10);
            prop_assert!(b.eigenvalues.windows(2).all(|w| w[1] >= w[0] - 1e-9));
            let head = b.truncate(n / 2).unwrap();
            prop_assert_eq!(&head.eigenvalues[..], &b.eigenvalues[..n / 2]);
        }
        if !periodic {
            let n = available_dimension(BasisKind::Stokes, &g).min(8);
            let b = build_basis(BasisKind::Stokes, n, &g, 1e-10).unwrap();
            prop_assert!(b.gram_error() < 1e-10);
            prop_assert!(b.eigenvalues.iter().all(|&l| l > 0.0));
        }
    }

    #[test]
    fn projection_is_a_contraction_growing_with_n(seed in 0u64..500) {
        let mut cfg = RunConfig::default();
        cfg.grid.nx = 6;
        cfg.grid.ny = 6;
        cfg.initial.preset = Preset::Spinodal;
        cfg.initial.seed = seed;
        let s = initial_state(&cfg).unwrap();
        let full = build_basis(BasisKind::NeumannScalar, 36, &cfg.grid, 1e-10).unwrap();
        let mut prev = 0.0;
        for n in [1, 4, 9, 20, 36] {
            let c = full.truncate(n).unwrap().project_scalar(&s.phi).unwrap();
            let e = c.norm();
            prop_assert!(e >= prev - 1e-12);
            prop_assert!(e <= s.phi.norm() * (1.0 + 1e-12));
            prev = e;
        }
        prop_assert!((prev - s.phi.norm()).abs() < 1e-10 * s.phi.norm());
    }
}
