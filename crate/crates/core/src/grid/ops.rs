//! Discrete differential operators on the MAC grid.
//!
//! Every public operator is pure: inputs are borrowed, a fresh field is
//! returned. The `*_into` kernels write into caller-owned buffers and are what
//! the iterative solvers use in their inner loops.

use serde::{Deserialize, Serialize};

use super::{BcMode, GridSpec, MacVelocity, ScalarField};
use crate::error::Result;
use crate::par;

/// Face reconstruction used by the flux-form transport operators.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Advection {
    /// First-order donor cell.
    #[default]
    Upwind,
    /// Second-order arithmetic face average (skew-consistent, no numerical
    /// dissipation).
    Centered,
}

impl Advection {
    pub fn as_str(self) -> &'static str {
        match self {
            Advection::Upwind => "upwind",
            Advection::Centered => "centered",
        }
    }

    /// Value transported through a face with normal velocity `vel` between
    /// the `lo` and `hi` cells.
    #[inline]
    pub fn face_value(self, vel: f64, lo: f64, hi: f64) -> f64 {
        match self {
            Advection::Upwind => {
                if vel > 0.0 {
                    lo
                } else {
                    hi
                }
            }
            Advection::Centered => 0.5 * (lo + hi),
        }
    }
}

/// Neighbour indices along one axis. `None` marks a wall in physical mode.
#[inline]
pub(crate) fn lower(i: usize, n: usize, bc: BcMode) -> Option<usize> {
    if i > 0 {
        Some(i - 1)
    } else if bc == BcMode::Periodic {
        Some(n - 1)
    } else {
        None
    }
}

#[inline]
pub(crate) fn upper(i: usize, n: usize, bc: BcMode) -> Option<usize> {
    if i + 1 < n {
        Some(i + 1)
    } else if bc == BcMode::Periodic {
        Some(0)
    } else {
        None
    }
}

/// Index of the x-face on the high side of cell column `i`.
#[inline]
pub(crate) fn xface_hi(g: &GridSpec, i: usize) -> usize {
    if i + 1 == g.nx && g.bc == BcMode::Periodic {
        0
    } else {
        i + 1
    }
}

#[inline]
pub(crate) fn yface_hi(g: &GridSpec, j: usize) -> usize {
    if j + 1 == g.ny && g.bc == BcMode::Periodic {
        0
    } else {
        j + 1
    }
}

/// Cells on either side of x-face `i` (low, high); `None` for wall faces.
#[inline]
pub(crate) fn xface_cells(g: &GridSpec, i: usize) -> Option<(usize, usize)> {
    match g.bc {
        BcMode::Physical => {
            if i == 0 || i == g.nx {
                None
            } else {
                Some((i - 1, i))
            }
        }
        BcMode::Periodic => Some((if i == 0 { g.nx - 1 } else { i - 1 }, i)),
    }
}

#[inline]
pub(crate) fn yface_cells(g: &GridSpec, j: usize) -> Option<(usize, usize)> {
    match g.bc {
        BcMode::Physical => {
            if j == 0 || j == g.ny {
                None
            } else {
                Some((j - 1, j))
            }
        }
        BcMode::Periodic => Some((if j == 0 { g.ny - 1 } else { j - 1 }, j)),
    }
}

pub fn divergence_into(g: &GridSpec, u: &[f64], v: &[f64], out: &mut [f64]) {
    let (hx, hy) = (g.hx(), g.hy());
    let nfx = g.nfx();
    par::rows_mut(out, g.nx, |j, row| {
        let jh = yface_hi(g, j);
        for (i, o) in row.iter_mut().enumerate() {
            let ih = xface_hi(g, i);
            *o = (u[ih + nfx * j] - u[i + nfx * j]) / hx + (v[i + g.nx * jh] - v[i + g.nx * j]) / hy;
        }
    });
}

/// Per-cell net outflow of a face field divided by the spacing.
pub fn divergence(vel: &MacVelocity) -> ScalarField {
    let g = vel.grid();
    let mut out = ScalarField::zeros(g);
    divergence_into(g, vel.u(), vel.v(), out.values_mut());
    out
}

pub fn gradient_into(g: &GridSpec, s: &[f64], gu: &mut [f64], gv: &mut [f64]) {
    let (hx, hy) = (g.hx(), g.hy());
    let nfx = g.nfx();
    par::rows_mut(gu, nfx, |j, row| {
        for (i, o) in row.iter_mut().enumerate() {
            *o = match xface_cells(g, i) {
                Some((a, b)) => (s[b + g.nx * j] - s[a + g.nx * j]) / hx,
                None => 0.0,
            };
        }
    });
    par::rows_mut(gv, g.nx, |j, row| match yface_cells(g, j) {
        Some((a, b)) => {
            for (i, o) in row.iter_mut().enumerate() {
                *o = (s[i + g.nx * b] - s[i + g.nx * a]) / hy;
            }
        }
        None => row.iter_mut().for_each(|o| *o = 0.0),
    });
}

/// Centred difference of adjacent cells onto the face between them. With the
/// Neumann mirror ghost the wall-face gradient is zero.
pub fn gradient_to_faces(s: &ScalarField) -> MacVelocity {
    let g = s.grid();
    let mut out = MacVelocity::zeros(g);
    gradient_into(g, s.values(), &mut out.u, &mut out.v);
    out
}

/// Five-point Neumann (or periodic) Laplacian, evaluated as the divergence
/// of the face gradient with identical floating-point operations.
pub fn laplace_into(g: &GridSpec, s: &[f64], out: &mut [f64]) {
    let (hx, hy) = (g.hx(), g.hy());
    let (nx, ny, bc) = (g.nx, g.ny, g.bc);
    par::rows_mut(out, nx, |j, row| {
        let c = |i: usize, j: usize| s[i + nx * j];
        let jl = lower(j, ny, bc);
        let jh = upper(j, ny, bc);
        for (i, o) in row.iter_mut().enumerate() {
            let sc = c(i, j);
            let gxl = lower(i, nx, bc).map_or(0.0, |a| (sc - c(a, j)) / hx);
            let gxr = upper(i, nx, bc).map_or(0.0, |b| (c(b, j) - sc) / hx);
            let gyl = jl.map_or(0.0, |a| (sc - c(i, a)) / hy);
            let gyr = jh.map_or(0.0, |b| (c(i, b) - sc) / hy);
            *o = (gxr - gxl) / hx + (gyr - gyl) / hy;
        }
    });
}

pub fn laplace_neumann(s: &ScalarField) -> ScalarField {
    let g = s.grid();
    let mut out = ScalarField::zeros(g);
    laplace_into(g, s.values(), out.values_mut());
    out
}

/// Diagonal of the Laplacian matrix (used by Jacobi preconditioners).
pub fn laplace_diagonal(g: &GridSpec) -> Vec<f64> {
    let (ax, ay) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    let mut d = vec![0.0; g.n_cells()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let mut s = 0.0;
            if lower(i, g.nx, g.bc).is_some() {
                s -= ax;
            }
            if upper(i, g.nx, g.bc).is_some() {
                s -= ax;
            }
            if lower(j, g.ny, g.bc).is_some() {
                s -= ay;
            }
            if upper(j, g.ny, g.bc).is_some() {
                s -= ay;
            }
            d[g.cell(i, j)] = s;
        }
    }
    d
}

/// Diagonal of the squared Laplacian, `Σ_k L_ik²`.
pub fn laplace_squared_diagonal(g: &GridSpec) -> Vec<f64> {
    let (ax, ay) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
    let mut d = vec![0.0; g.n_cells()];
    for j in 0..g.ny {
        for i in 0..g.nx {
            let mut diag = 0.0;
            let mut off = 0.0;
            for (has, w) in [
                (lower(i, g.nx, g.bc), ax),
                (upper(i, g.nx, g.bc), ax),
                (lower(j, g.ny, g.bc), ay),
                (upper(j, g.ny, g.bc), ay),
            ] {
                if has.is_some() {
                    diag -= w;
                    off += w * w;
                }
            }
            d[g.cell(i, j)] = diag * diag + off;
        }
    }
    d
}

/// Face fluxes `vel · s_face` for the chosen reconstruction.
pub fn advective_flux_into(
    g: &GridSpec,
    u: &[f64],
    v: &[f64],
    s: &[f64],
    scheme: Advection,
    fu: &mut [f64],
    fv: &mut [f64],
) {
    let nfx = g.nfx();
    par::rows_mut(fu, nfx, |j, row| {
        for (i, o) in row.iter_mut().enumerate() {
            *o = match xface_cells(g, i) {
                Some((a, b)) => {
                    let vel = u[i + nfx * j];
                    vel * scheme.face_value(vel, s[a + g.nx * j], s[b + g.nx * j])
                }
                None => 0.0,
            };
        }
    });
    par::rows_mut(fv, g.nx, |j, row| match yface_cells(g, j) {
        Some((a, b)) => {
            for (i, o) in row.iter_mut().enumerate() {
                let vel = v[i + g.nx * j];
                *o = vel * scheme.face_value(vel, s[i + g.nx * a], s[i + g.nx * b]);
            }
        }
        None => row.iter_mut().for_each(|o| *o = 0.0),
    });
}

/// Conservative transport term `∇·(v s)`. With zero wall flux the cell sum
/// of the result telescopes to zero.
pub fn advect_scalar(vel: &MacVelocity, s: &ScalarField, scheme: Advection) -> Result<ScalarField> {
    let g = vel.grid();
    g.check_same(s.grid())?;
    let mut flux = MacVelocity::zeros(g);
    advective_flux_into(g, vel.u(), vel.v(), s.values(), scheme, &mut flux.u, &mut flux.v);
    Ok(divergence(&flux))
}

/// Cell-volume-weighted mean.
pub fn mean_value(s: &ScalarField) -> f64 {
    s.values().iter().sum::<f64>() / s.values().len() as f64
}

/// Arithmetic average of the two faces bounding each cell, per component.
pub fn face_to_cell(vel: &MacVelocity) -> (ScalarField, ScalarField) {
    let g = vel.grid();
    let mut uc = ScalarField::zeros(g);
    let mut vc = ScalarField::zeros(g);
    let nfx = g.nfx();
    {
        let (u, v) = (vel.u(), vel.v());
        let out = uc.values_mut();
        for j in 0..g.ny {
            for i in 0..g.nx {
                out[g.cell(i, j)] = 0.5 * (u[i + nfx * j] + u[xface_hi(g, i) + nfx * j]);
            }
        }
        let out = vc.values_mut();
        for j in 0..g.ny {
            let jh = yface_hi(g, j);
            for i in 0..g.nx {
                out[g.cell(i, j)] = 0.5 * (v[i + g.nx * j] + v[i + g.nx * jh]);
            }
        }
    }
    (uc, vc)
}

/// Two-point average of adjacent cells onto every face. Wall faces take the
/// adjacent cell value (even ghost).
pub fn cell_to_face(s: &ScalarField) -> MacVelocity {
    let g = s.grid();
    let mut out = MacVelocity::zeros(g);
    cell_to_face_into(g, s.values(), &mut out.u, &mut out.v);
    out
}

pub fn cell_to_face_into(g: &GridSpec, s: &[f64], fu: &mut [f64], fv: &mut [f64]) {
    let nfx = g.nfx();
    for j in 0..g.ny {
        for i in 0..nfx {
            fu[i + nfx * j] = match xface_cells(g, i) {
                Some((a, b)) => 0.5 * (s[a + g.nx * j] + s[b + g.nx * j]),
                None => s[i.min(g.nx - 1) + g.nx * j],
            };
        }
    }
    for j in 0..g.nfy() {
        let cells = yface_cells(g, j);
        for i in 0..g.nx {
            fv[i + g.nx * j] = match cells {
                Some((a, b)) => 0.5 * (s[i + g.nx * a] + s[i + g.nx * b]),
                None => s[i + g.nx * j.min(g.ny - 1)],
            };
        }
    }
}

/// Cell values averaged onto the grid nodes (cell corners), `(nx+1)·(ny+1)`
/// entries in physical mode and `nx·ny` in periodic mode. Node `(i, j)` sits
/// at `(i·hx, j·hy)`. Walls use the even ghost.
pub fn cell_to_node(g: &GridSpec, s: &[f64]) -> Vec<f64> {
    let (nnx, nny) = node_dims(g);
    let mut out = vec![0.0; nnx * nny];
    let clampx = |i: isize| -> usize {
        match g.bc {
            BcMode::Periodic => i.rem_euclid(g.nx as isize) as usize,
            BcMode::Physical => i.clamp(0, g.nx as isize - 1) as usize,
        }
    };
    let clampy = |j: isize| -> usize {
        match g.bc {
            BcMode::Periodic => j.rem_euclid(g.ny as isize) as usize,
            BcMode::Physical => j.clamp(0, g.ny as isize - 1) as usize,
        }
    };
    for j in 0..nny {
        for i in 0..nnx {
            let (il, ih) = (clampx(i as isize - 1), clampx(i as isize));
            let (jl, jh) = (clampy(j as isize - 1), clampy(j as isize));
            out[i + nnx * j] = 0.25
                * (s[il + g.nx * jl] + s[ih + g.nx * jl] + s[il + g.nx * jh] + s[ih + g.nx * jh]);
        }
    }
    out
}

/// Node array dimensions matching [`cell_to_node`].
pub fn node_dims(g: &GridSpec) -> (usize, usize) {
    match g.bc {
        BcMode::Physical => (g.nx + 1, g.ny + 1),
        BcMode::Periodic => (g.nx, g.ny),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::TensorField;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_scalar(g: &GridSpec, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vals = (0..g.n_cells()).map(|_| rng.random_range(-1.0..1.0)).collect();
        ScalarField::from_values(g, vals).unwrap()
    }

    fn random_velocity(g: &GridSpec, seed: u64) -> MacVelocity {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = (0..g.n_xfaces()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let v = (0..g.n_yfaces()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut vel = MacVelocity::from_components(g, u, v).unwrap();
        vel.zero_boundary();
        vel
    }

    fn grid4(bc: BcMode) -> GridSpec {
        GridSpec::new(1.0, 1.0, 4, 4, bc).unwrap()
    }

    #[test]
    fn divergence_of_uniform_flow_vanishes() {
        let g = grid4(BcMode::Periodic);
        let vel = MacVelocity::from_fn(&g, |_, _| 1.0, |_, _| 0.0);
        assert!(divergence(&vel).max_abs() == 0.0);
    }

    #[test]
    fn divergence_is_exact_on_affine_components() {
        // Hand evaluation on a 4x4 grid: u = x on x-faces gives (x_{i+1}-x_i)/h = 1.
        let g = grid4(BcMode::Physical);
        let mut vel = MacVelocity::zeros(&g);
        for j in 0..4 {
            for i in 0..5 {
                vel.u_mut()[g.xface(i, j)] = i as f64 * 0.25;
            }
        }
        for j in 0..5 {
            for i in 0..4 {
                vel.v_mut()[g.yface(i, j)] = -(j as f64) * 0.25;
            }
        }
        assert!(divergence(&vel).max_abs() < 1e-15);

        for j in 0..5 {
            for i in 0..4 {
                vel.v_mut()[g.yface(i, j)] = j as f64 * 0.25;
            }
        }
        let d = divergence(&vel);
        assert!(d.values().iter().all(|&x| (x - 2.0).abs() < 1e-14));
    }

    #[test]
    fn gradient_examples() {
        let g = grid4(BcMode::Periodic);
        let c = ScalarField::constant(&g, 3.0);
        assert_eq!(gradient_to_faces(&c).max_abs(), 0.0);

        // s = x: interior x-faces see (x_i - x_{i-1})/h = 1; the wrap face
        // sees the periodic jump.
        let s = ScalarField::from_fn(&g, |x, _| x);
        let gr = gradient_to_faces(&s);
        for j in 0..4 {
            for i in 1..4 {
                assert!((gr.u()[g.xface(i, j)] - 1.0).abs() < 1e-14);
            }
        }
        assert!(gr.v().iter().all(|&x| x.abs() < 1e-14));

        let g = grid4(BcMode::Physical);
        let gr = gradient_to_faces(&random_scalar(&g, 3));
        assert_eq!(gr.max_boundary_abs(), 0.0);
    }

    #[test]
    fn laplacian_examples() {
        for bc in [BcMode::Physical, BcMode::Periodic] {
            let g = GridSpec::new(2.0, 1.0, 8, 6, bc).unwrap();
            assert_eq!(laplace_neumann(&ScalarField::constant(&g, 1.5)).max_abs(), 0.0);
            let l = laplace_neumann(&random_scalar(&g, 11));
            assert!(mean_value(&l).abs() < 1e-13);
        }
    }

    #[test]
    fn laplacian_is_second_order_on_cosine() {
        let lx = 2.0;
        let k = std::f64::consts::PI / lx;
        let err = |n: usize| {
            let g = GridSpec::new(lx, 1.0, n, 4, BcMode::Physical).unwrap();
            let s = ScalarField::from_fn(&g, |x, _| (k * x).cos());
            let exact = ScalarField::from_fn(&g, |x, _| -k * k * (k * x).cos());
            laplace_neumann(&s).sub(&exact).max_abs()
        };
        let (e1, e2, e3) = (err(16), err(32), err(64));
        assert!((e1 / e2).log2() > 1.9 && (e2 / e3).log2() > 1.9, "{e1} {e2} {e3}");
    }

    #[test]
    fn laplacian_equals_divergence_of_gradient_bitwise() {
        for bc in [BcMode::Physical, BcMode::Periodic] {
            let g = GridSpec::new(1.0, 3.0, 7, 9, bc).unwrap();
            let s = random_scalar(&g, 5);
            assert_eq!(laplace_neumann(&s), divergence(&gradient_to_faces(&s)));
        }
    }

    #[test]
    fn mean_value_examples() {
        let g = GridSpec::new(1.0, 1.0, 10, 4, BcMode::Physical).unwrap();
        assert!((mean_value(&ScalarField::constant(&g, 2.5)) - 2.5).abs() < 1e-15);
        let s = ScalarField::from_fn(&g, |x, _| x);
        assert!((mean_value(&s) - 0.5).abs() < 1e-15);
        let s = ScalarField::from_fn(&g, |x, _| if x < 0.5 { 1.0 } else { -1.0 });
        assert_eq!(mean_value(&s), 0.0);
    }

    #[test]
    fn advection_examples() {
        for bc in [BcMode::Physical, BcMode::Periodic] {
            let g = GridSpec::new(1.0, 1.0, 12, 10, bc).unwrap();
            let psi = |x: f64, y: f64| (std::f64::consts::PI * x).sin().powi(2) * (std::f64::consts::PI * y).sin().powi(2);
            let vel = MacVelocity::from_stream_function(&g, psi);
            assert!(divergence(&vel).max_abs() < 1e-12);
            for scheme in [Advection::Upwind, Advection::Centered] {
                let c = ScalarField::constant(&g, 0.7);
                assert!(advect_scalar(&vel, &c, scheme).unwrap().max_abs() < 1e-12);
                let s = random_scalar(&g, 9);
                let zero = MacVelocity::zeros(&g);
                assert_eq!(advect_scalar(&zero, &s, scheme).unwrap().max_abs(), 0.0);
                let a = advect_scalar(&vel, &s, scheme).unwrap();
                assert!(a.values().iter().sum::<f64>().abs() < 1e-12);
            }
        }
    }

    #[test]
    fn advection_rejects_grid_mismatch() {
        let g1 = grid4(BcMode::Physical);
        let g2 = GridSpec::new(1.0, 1.0, 5, 4, BcMode::Physical).unwrap();
        let err = advect_scalar(&MacVelocity::zeros(&g1), &ScalarField::zeros(&g2), Advection::Upwind);
        assert!(matches!(err, Err(crate::Error::GridMismatch { .. })));
    }

    #[test]
    fn interpolation_examples() {
        let g = GridSpec::new(1.0, 1.0, 6, 5, BcMode::Physical).unwrap();
        let c = ScalarField::constant(&g, 4.0);
        let f = cell_to_face(&c);
        assert!(f.u().iter().chain(f.v()).all(|&x| x == 4.0));
        let cv = MacVelocity::from_fn(&g, |_, _| 2.0, |_, _| -1.0);
        let mut cv = cv;
        // constant field including wall faces
        cv.u_mut().iter_mut().for_each(|x| *x = 2.0);
        cv.v_mut().iter_mut().for_each(|x| *x = -1.0);
        let (uc, vc) = face_to_cell(&cv);
        assert!(uc.values().iter().all(|&x| x == 2.0));
        assert!(vc.values().iter().all(|&x| x == -1.0));

        // affine data: interior faces exact, round trip exact away from walls
        let s = ScalarField::from_fn(&g, |x, y| 1.0 + 2.0 * x - 3.0 * y);
        let f = cell_to_face(&s);
        for j in 0..g.ny {
            for i in 1..g.nx {
                let (x, y) = g.xface_center(i, j);
                assert!((f.u()[g.xface(i, j)] - (1.0 + 2.0 * x - 3.0 * y)).abs() < 1e-14);
            }
        }
        let (back, _) = face_to_cell(&f);
        for j in 0..g.ny {
            for i in 1..g.nx - 1 {
                assert!((back.at(i, j) - s.at(i, j)).abs() < 1e-14);
            }
        }
        let vel = MacVelocity::from_fn(&g, |x, _| 3.0 * x - 1.0, |_, y| y);
        let (uc, vc) = face_to_cell(&vel);
        for j in 1..g.ny - 1 {
            for i in 1..g.nx - 1 {
                let (x, y) = g.cell_center(i, j);
                assert!((uc.at(i, j) - (3.0 * x - 1.0)).abs() < 1e-14);
                assert!((vc.at(i, j) - y).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn stream_function_sampling_is_divergence_free() {
        let g = GridSpec::new(1.0, 2.0, 9, 13, BcMode::Periodic).unwrap();
        let tp = 2.0 * std::f64::consts::PI;
        let vel = MacVelocity::from_stream_function(&g, |x, y| (tp * x).sin() * (tp * y / 2.0).cos());
        assert!(divergence(&vel).max_abs() < 1e-12);
        let _ = TensorField::identity(&g);
    }

    proptest! {
        #[test]
        fn summation_by_parts(seed in 0u64..1000, nx in 4usize..12, ny in 4usize..12, periodic in any::<bool>()) {
            let bc = if periodic { BcMode::Periodic } else { BcMode::Physical };
            let g = GridSpec::new(1.3, 0.7, nx, ny, bc).unwrap();
            let s = random_scalar(&g, seed);
            let v = random_velocity(&g, seed + 1);
            let lhs = divergence(&v).dot(&s);
            let rhs = -v.dot(&gradient_to_faces(&s));
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (lhs.abs() + rhs.abs()).max(1.0));
        }

        #[test]
        fn centered_transport_is_skew(seed in 0u64..1000, n in 4usize..12, periodic in any::<bool>()) {
            // (s, ∇·(v s_f)) = 0 for discretely divergence-free v.
            let bc = if periodic { BcMode::Periodic } else { BcMode::Physical };
            let g = GridSpec::new(1.0, 1.0, n, n + 1, bc).unwrap();
            let phase = seed as f64 * 0.1;
            let vel = MacVelocity::from_stream_function(&g, |x, y| {
                (std::f64::consts::PI * x).sin().powi(2) * (std::f64::consts::PI * y).sin().powi(2) * (1.0 + (x + phase).cos())
            });
            let s = random_scalar(&g, seed);
            let a = advect_scalar(&vel, &s, Advection::Centered).unwrap();
            prop_assert!(a.dot(&s).abs() < 1e-12);
        }
    }
}
