//! Momentum balance: advection, variable-viscosity diffusion, Darcy drag,
//! capillary and elastic forcing, pressure projection, and the steady
//! variable-viscosity Stokes solver.

use crate::elasticity::elastic_stress_divergence;
use crate::error::{Error, Result};
use crate::grid::ops::{cell_to_node, divergence_into, gradient_into, laplace_into, node_dims, xface_cells, xface_hi, yface_cells, yface_hi, Advection};
use crate::grid::{BcMode, GridSpec, MacVelocity, ScalarField, TensorField};
use crate::linalg::{pcg, CgOptions, ResidualNorm};
use crate::params::ModelParams;
use crate::phasefield::double_well;

/// Face-centred forces acting in one momentum step.
#[derive(Clone, Debug)]
pub struct ForceBundle {
    pub capillary: MacVelocity,
    pub elastic: MacVelocity,
    pub drag: MacVelocity,
    pub external: MacVelocity,
}

impl ForceBundle {
    pub fn is_finite(&self) -> bool {
        self.capillary.is_finite() && self.elastic.is_finite() && self.drag.is_finite() && self.external.is_finite()
    }
}

/// Interior x-face sample of the two adjacent cells, `None` on walls.
#[inline]
fn xpair(g: &GridSpec, s: &[f64], i: usize, j: usize) -> Option<(f64, f64)> {
    xface_cells(g, i).map(|(a, b)| (s[g.cell(a, j)], s[g.cell(b, j)]))
}

#[inline]
fn ypair(g: &GridSpec, s: &[f64], i: usize, j: usize) -> Option<(f64, f64)> {
    yface_cells(g, j).map(|(a, b)| (s[g.cell(i, a)], s[g.cell(i, b)]))
}

/// Applies `f(a, b)` to the adjacent cell values of every interior face;
/// wall faces are set to zero.
fn face_map(s: &[f64], g: &GridSpec, f: impl Fn(f64, f64) -> f64) -> MacVelocity {
    let mut out = MacVelocity::zeros(g);
    for j in 0..g.ny {
        for i in 0..g.nfx() {
            if let Some((a, b)) = xpair(g, s, i, j) {
                out.u[g.xface(i, j)] = f(a, b);
            }
        }
    }
    for j in 0..g.nfy() {
        for i in 0..g.nx {
            if let Some((a, b)) = ypair(g, s, i, j) {
                out.v[g.yface(i, j)] = f(a, b);
            }
        }
    }
    out
}

/// Capillary force in potential form, `μ∇φ + (λₑ/2) tr(FFᵀ − I)∇φ`, on
/// faces. The trace is taken as `Σ F_L^{ab} F_R^{ab} − d` over the two
/// adjacent cells, the face value that makes the discrete energy law exact.
pub fn capillary_force(mu: &ScalarField, phi: &ScalarField, f: &TensorField, p: &ModelParams) -> Result<MacVelocity> {
    let g = *phi.grid();
    g.check_same(mu.grid())?;
    g.check_same(f.grid())?;
    let (hx, hy) = (g.hx(), g.hy());
    let (m, ph, c) = (mu.values(), phi.values(), f.components());
    let tr_pair = |a: usize, b: usize| c[0][a] * c[0][b] + c[1][a] * c[1][b] + c[2][a] * c[2][b] + c[3][a] * c[3][b] - 2.0;
    let mut out = MacVelocity::zeros(&g);
    for j in 0..g.ny {
        for i in 0..g.nfx() {
            if let Some((a, b)) = xface_cells(&g, i) {
                let (ca, cb) = (g.cell(a, j), g.cell(b, j));
                let gphi = (ph[cb] - ph[ca]) / hx;
                out.u[g.xface(i, j)] = (0.5 * (m[ca] + m[cb]) + 0.5 * p.lambda_e * tr_pair(ca, cb)) * gphi;
            }
        }
    }
    for j in 0..g.nfy() {
        if let Some((a, b)) = yface_cells(&g, j) {
            for i in 0..g.nx {
                let (ca, cb) = (g.cell(i, a), g.cell(i, b));
                let gphi = (ph[cb] - ph[ca]) / hy;
                out.v[g.yface(i, j)] = (0.5 * (m[ca] + m[cb]) + 0.5 * p.lambda_e * tr_pair(ca, cb)) * gphi;
            }
        }
    }
    Ok(out)
}

/// Face Darcy coefficient `η(φ̄)(1 − φ̄)/κ(φ̄)` with `φ̄` the face average.
pub fn drag_coefficients(phi: &ScalarField, p: &ModelParams) -> MacVelocity {
    face_map(phi.values(), phi.grid(), |a, b| p.drag_coefficient(0.5 * (a + b)))
}

/// Darcy drag `−η(φ)(1 − φ)u/κ(φ)` on faces.
pub fn darcy_drag(phi: &ScalarField, vel: &MacVelocity, p: &ModelParams) -> Result<MacVelocity> {
    phi.grid().check_same(vel.grid())?;
    let mut c = drag_coefficients(phi, p);
    c.u.iter_mut().zip(vel.u()).for_each(|(c, u)| *c *= -u);
    c.v.iter_mut().zip(vel.v()).for_each(|(c, v)| *c *= -v);
    Ok(c)
}

/// `∫ (η/κ) |u|²` and `∫ (η/κ) φ |u|²` with face-averaged `φ`.
pub fn drag_budget(phi: &ScalarField, vel: &MacVelocity, p: &ModelParams) -> (f64, f64) {
    let g = *phi.grid();
    let w = face_map(phi.values(), &g, |a, b| {
        let f = 0.5 * (a + b);
        p.eta(f) / p.kappa(f)
    });
    let wp = face_map(phi.values(), &g, |a, b| {
        let f = 0.5 * (a + b);
        p.eta(f) * f / p.kappa(f)
    });
    let vol = g.cell_volume();
    let q = |w: &MacVelocity| {
        vol * (w.u.iter().zip(vel.u()).map(|(w, u)| w * u * u).sum::<f64>()
            + w.v.iter().zip(vel.v()).map(|(w, v)| w * v * v).sum::<f64>())
    };
    (q(&w), q(&wp))
}

/// Matrix-free `−∇·(η∇·)` acting on each velocity component with no-slip
/// walls. Viscosity is sampled at cell centres and at grid nodes (average of
/// the four surrounding cells, mirrored at walls).
#[derive(Clone, Debug)]
pub struct ViscousOperator {
    grid: GridSpec,
    eta_c: Vec<f64>,
    eta_n: Vec<f64>,
}

impl ViscousOperator {
    pub fn new(phi: &ScalarField, p: &ModelParams) -> Self {
        let g = *phi.grid();
        let eta_c = phi.values().iter().map(|&x| p.eta(x)).collect();
        let eta_n = cell_to_node(&g, phi.values()).into_iter().map(|x| p.eta(x)).collect();
        ViscousOperator { grid: g, eta_c, eta_n }
    }

    pub fn constant(g: &GridSpec, eta: f64) -> Self {
        let (nnx, nny) = node_dims(g);
        ViscousOperator {
            grid: *g,
            eta_c: vec![eta; g.n_cells()],
            eta_n: vec![eta; nnx * nny],
        }
    }

    pub fn cell_viscosity(&self) -> &[f64] {
        &self.eta_c
    }

    #[inline]
    fn node(&self, i: usize, j: usize) -> f64 {
        let (nnx, nny) = node_dims(&self.grid);
        self.eta_n[(i % nnx) + nnx * (j % nny)]
    }

    /// Visits the off-diagonal couplings of x-face `(i, j)` and returns its
    /// diagonal. Wall ghosts are folded into the diagonal.
    fn xrow(&self, i: usize, j: usize, mut off: impl FnMut(usize, f64)) -> f64 {
        let g = &self.grid;
        let (ax, ay) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
        let (a, b) = xface_cells(g, i).expect("interior face");
        let (ea, eb) = (self.eta_c[g.cell(a, j)], self.eta_c[g.cell(b, j)]);
        off(g.xface(a, j), -ea * ax);
        off(g.xface(xface_hi(g, b), j), -eb * ax);
        let mut diag = (ea + eb) * ax;
        let (nb, nt) = (self.node(i, j), self.node(i, j + 1));
        match (j + 1 < g.ny, g.bc) {
            (true, _) => off(g.xface(i, j + 1), -nt * ay),
            (false, BcMode::Periodic) => off(g.xface(i, 0), -nt * ay),
            (false, BcMode::Physical) => diag += nt * ay,
        }
        match (j > 0, g.bc) {
            (true, _) => off(g.xface(i, j - 1), -nb * ay),
            (false, BcMode::Periodic) => off(g.xface(i, g.ny - 1), -nb * ay),
            (false, BcMode::Physical) => diag += nb * ay,
        }
        diag + (nb + nt) * ay
    }

    fn yrow(&self, i: usize, j: usize, mut off: impl FnMut(usize, f64)) -> f64 {
        let g = &self.grid;
        let (ax, ay) = (1.0 / (g.hx() * g.hx()), 1.0 / (g.hy() * g.hy()));
        let (a, b) = yface_cells(g, j).expect("interior face");
        let (ea, eb) = (self.eta_c[g.cell(i, a)], self.eta_c[g.cell(i, b)]);
        off(g.yface(i, a), -ea * ay);
        off(g.yface(i, yface_hi(g, b)), -eb * ay);
        let mut diag = (ea + eb) * ay;
        let (nl, nr) = (self.node(i, j), self.node(i + 1, j));
        match (i + 1 < g.nx, g.bc) {
            (true, _) => off(g.yface(i + 1, j), -nr * ax),
            (false, BcMode::Periodic) => off(g.yface(0, j), -nr * ax),
            (false, BcMode::Physical) => diag += nr * ax,
        }
        match (i > 0, g.bc) {
            (true, _) => off(g.yface(i - 1, j), -nl * ax),
            (false, BcMode::Periodic) => off(g.yface(g.nx - 1, j), -nl * ax),
            (false, BcMode::Physical) => diag += nl * ax,
        }
        diag + (nl + nr) * ax
    }

    /// `y = shift ∘ x − ∇·(η∇x)` on the x-face component (`shift` per face,
    /// may be empty for zero). Wall faces map to zero.
    pub fn apply_u(&self, shift: &[f64], x: &[f64], y: &mut [f64]) {
        let g = self.grid;
        let nfx = g.nfx();
        crate::par::rows_mut(y, nfx, |j, row| {
            for (i, o) in row.iter_mut().enumerate() {
                if g.is_boundary_xface(i) {
                    *o = 0.0;
                    continue;
                }
                let k = g.xface(i, j);
                let mut acc = 0.0;
                let d = self.xrow(i, j, |m, w| acc += w * x[m]);
                let s = if shift.is_empty() { 0.0 } else { shift[k] };
                *o = (d + s) * x[k] + acc;
            }
        });
    }

    pub fn apply_v(&self, shift: &[f64], x: &[f64], y: &mut [f64]) {
        let g = self.grid;
        crate::par::rows_mut(y, g.nx, |j, row| {
            if g.is_boundary_yface(j) {
                row.iter_mut().for_each(|o| *o = 0.0);
                return;
            }
            for (i, o) in row.iter_mut().enumerate() {
                let k = g.yface(i, j);
                let mut acc = 0.0;
                let d = self.yrow(i, j, |m, w| acc += w * x[m]);
                let s = if shift.is_empty() { 0.0 } else { shift[k] };
                *o = (d + s) * x[k] + acc;
            }
        });
    }

    /// `−∇·(η∇u)` for both components.
    pub fn apply(&self, vel: &MacVelocity) -> MacVelocity {
        let mut out = MacVelocity::zeros(&self.grid);
        self.apply_u(&[], vel.u(), &mut out.u);
        self.apply_v(&[], vel.v(), &mut out.v);
        out
    }

    /// Inverse diagonal of `shift − ∇·(η∇·)`; wall entries are 1.
    fn inv_diag(&self, shift: &MacVelocity) -> (Vec<f64>, Vec<f64>) {
        let g = self.grid;
        let mut du = vec![1.0; g.n_xfaces()];
        let mut dv = vec![1.0; g.n_yfaces()];
        for j in 0..g.ny {
            for i in 0..g.nfx() {
                if !g.is_boundary_xface(i) {
                    let k = g.xface(i, j);
                    du[k] = 1.0 / (self.xrow(i, j, |_, _| {}) + shift.u[k]);
                }
            }
        }
        for j in 0..g.nfy() {
            if g.is_boundary_yface(j) {
                continue;
            }
            for i in 0..g.nx {
                let k = g.yface(i, j);
                dv[k] = 1.0 / (self.yrow(i, j, |_, _| {}) + shift.v[k]);
            }
        }
        (du, dv)
    }

    /// Solves `(shift − ∇·(η∇))x = b` componentwise, warm-started from `x`.
    pub fn solve(&self, shift: &MacVelocity, b: &MacVelocity, x: &mut MacVelocity, opts: &CgOptions) -> Result<usize> {
        let (du, dv) = self.inv_diag(shift);
        let mut bu = b.u.clone();
        let mut bv = b.v.clone();
        let g = self.grid;
        for (k, val) in bu.iter_mut().enumerate() {
            if g.is_boundary_xface(k % g.nfx()) {
                *val = 0.0;
            }
        }
        for (k, val) in bv.iter_mut().enumerate() {
            if g.is_boundary_yface(k / g.nx) {
                *val = 0.0;
            }
        }
        x.zero_boundary();
        let su = shift.u.clone();
        let sv = shift.v.clone();
        let a = pcg("viscous (x)", |p, q| self.apply_u(&su, p, q), Some(&du), &bu, &mut x.u, opts)?;
        let b = pcg("viscous (y)", |p, q| self.apply_v(&sv, p, q), Some(&dv), &bv, &mut x.v, opts)?;
        Ok(a.iterations + b.iterations)
    }

    /// Quadratic form `⟨u, −∇·(η∇u)⟩`, the discrete `∫η|∇u|²`.
    pub fn dissipation(&self, vel: &MacVelocity) -> f64 {
        vel.dot(&self.apply(vel))
    }
}

/// Morinishi divergence-form advection `∇·(u ⊗ u)` on the staggered grid.
/// With the centred reconstruction and a discretely divergence-free field
/// the term does no work on `u`.
pub fn momentum_advection(vel: &MacVelocity, scheme: Advection) -> MacVelocity {
    let g = *vel.grid();
    let (u, v) = (vel.u(), vel.v());
    let (hx, hy) = (g.hx(), g.hy());
    let mut out = MacVelocity::zeros(&g);
    let nfx = g.nfx();

    // cell-centre flux of u in x for cell (c, j)
    let fx_u = |c: usize, j: usize| {
        let (l, r) = (u[g.xface(c, j)], u[g.xface(xface_hi(&g, c), j)]);
        let vel = 0.5 * (l + r);
        vel * scheme.face_value(vel, l, r)
    };
    // flux of u in y through node (i, jn), between x-faces rows jn−1 and jn
    let fy_u = |i: usize, jn: usize| -> f64 {
        if g.bc == BcMode::Physical && (jn == 0 || jn == g.ny) {
            return 0.0;
        }
        let jn = jn % g.ny;
        let jb = if jn == 0 { g.ny - 1 } else { jn - 1 };
        let (a, b) = xface_cells(&g, i).expect("interior face");
        let vel = 0.5 * (v[g.yface(a, jn)] + v[g.yface(b, jn)]);
        vel * scheme.face_value(vel, u[g.xface(i, jb)], u[g.xface(i, jn)])
    };
    for j in 0..g.ny {
        for i in 0..nfx {
            let Some((a, b)) = xface_cells(&g, i) else {
                continue;
            };
            let dx = (fx_u(b, j) - fx_u(a, j)) / hx;
            let dy = (fy_u(i, j + 1) - fy_u(i, j)) / hy;
            out.u[g.xface(i, j)] = dx + dy;
        }
    }

    let fy_v = |i: usize, c: usize| {
        let (l, r) = (v[g.yface(i, c)], v[g.yface(i, yface_hi(&g, c))]);
        let vel = 0.5 * (l + r);
        vel * scheme.face_value(vel, l, r)
    };
    let fx_v = |inode: usize, j: usize| -> f64 {
        if g.bc == BcMode::Physical && (inode == 0 || inode == g.nx) {
            return 0.0;
        }
        let inode = inode % g.nx;
        let il = if inode == 0 { g.nx - 1 } else { inode - 1 };
        let (a, b) = yface_cells(&g, j).expect("interior face");
        let vel = 0.5 * (u[g.xface(inode, a)] + u[g.xface(inode, b)]);
        vel * scheme.face_value(vel, v[g.yface(il, j)], v[g.yface(inode, j)])
    };
    for j in 0..g.nfy() {
        if let Some((a, b)) = yface_cells(&g, j) {
            for i in 0..g.nx {
                let dy = (fy_v(i, b) - fy_v(i, a)) / hy;
                let dx = (fx_v(i + 1, j) - fx_v(i, j)) / hx;
                out.v[g.yface(i, j)] = dx + dy;
            }
        }
    }
    out
}

/// Result of a pressure projection.
#[derive(Clone, Debug)]
pub struct Projection {
    pub vel: MacVelocity,
    pub pressure: ScalarField,
    pub iterations: usize,
}

/// Leray projection: solves `Δp = (ρ/dt)∇·u*` with Neumann conditions and
/// returns `u* − (dt/ρ)∇p` with `max|∇·u| ≤ tol`. `p_guess` warm-starts the
/// solve; the returned pressure has zero mean.
pub fn project(
    vel: &MacVelocity,
    rho_over_dt: f64,
    tol: f64,
    max_iter: usize,
    p_guess: Option<&ScalarField>,
) -> Result<Projection> {
    let g = *vel.grid();
    let n = g.n_cells();
    // solve the positive form −Δp = −(ρ/dt)∇·u*
    let mut rhs = vec![0.0; n];
    divergence_into(&g, vel.u(), vel.v(), &mut rhs);
    rhs.iter_mut().for_each(|x| *x *= -rho_over_dt);
    let mut p = match p_guess {
        Some(q) => {
            g.check_same(q.grid())?;
            q.values().to_vec()
        }
        None => vec![0.0; n],
    };
    let opts = CgOptions {
        rel_tol: 0.0,
        abs_tol: 0.5 * tol * rho_over_dt,
        max_iter,
        norm: ResidualNorm::Max,
        remove_mean: true,
    };
    let neg_laplace = |x: &[f64], y: &mut [f64]| {
        laplace_into(&g, x, y);
        y.iter_mut().for_each(|v| *v = -*v);
    };
    let out = pcg("pressure projection", neg_laplace, None, &rhs, &mut p, &opts)?;
    let mean = p.iter().sum::<f64>() / n as f64;
    p.iter_mut().for_each(|x| *x -= mean);
    let mut gu = vec![0.0; g.n_xfaces()];
    let mut gv = vec![0.0; g.n_yfaces()];
    gradient_into(&g, &p, &mut gu, &mut gv);
    let mut res = vel.clone();
    crate::grid::field::axpy(&mut res.u, -1.0 / rho_over_dt, &gu);
    crate::grid::field::axpy(&mut res.v, -1.0 / rho_over_dt, &gv);
    res.zero_boundary();
    Ok(Projection {
        vel: res,
        pressure: ScalarField::from_values(&g, p)?,
        iterations: out.iterations,
    })
}

#[derive(Clone, Copy, Debug)]
pub struct MomentumOptions {
    /// Relative residual of the viscous solves.
    pub visc_tol: f64,
    /// Bound on `max|∇·u|` after projection.
    pub proj_tol: f64,
    pub max_iter: usize,
    pub advection: Advection,
}

impl Default for MomentumOptions {
    fn default() -> Self {
        MomentumOptions {
            visc_tol: 1e-10,
            proj_tol: 1e-10,
            max_iter: 10_000,
            advection: Advection::Upwind,
        }
    }
}

/// Inputs of one momentum step. Coefficients `η`, `κ` are frozen at `φⁿ`;
/// capillary and elastic forces use the new `φ`, `μ` and `F`.
#[derive(Clone, Copy, Debug)]
pub struct MomentumInputs<'a> {
    pub u_n: &'a MacVelocity,
    pub phi_n: &'a ScalarField,
    pub phi_new: &'a ScalarField,
    pub mu_new: &'a ScalarField,
    pub f_new: &'a TensorField,
    pub p_guess: Option<&'a ScalarField>,
    pub external: Option<&'a MacVelocity>,
}

#[derive(Clone, Debug)]
pub struct MomentumStep {
    pub vel: MacVelocity,
    pub pressure: ScalarField,
    pub forces: ForceBundle,
    pub visc_iterations: usize,
    pub proj_iterations: usize,
}

/// One step of the momentum equation:
///
/// 1. `(ρ/dt + c⁺)u* − ∇·(η∇u*) = (ρ/dt)uⁿ − ρ∇·(uⁿ⊗uⁿ) − c⁻uⁿ`, where the
///    Darcy coefficient `c` is treated implicitly where it is non-negative;
/// 2. `u** = u* + (dt/ρ)(f_cap + f_el + f_ext)`;
/// 3. projection of `u**`.
pub fn momentum_step(inp: &MomentumInputs, dt: f64, p: &ModelParams, opts: &MomentumOptions) -> Result<MomentumStep> {
    let g = *inp.u_n.grid();
    for other in [inp.phi_n.grid(), inp.phi_new.grid(), inp.mu_new.grid(), inp.f_new.grid()] {
        g.check_same(other)?;
    }
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Input(format!("time step must be positive, got {dt}")));
    }
    if !(inp.u_n.is_finite() && inp.phi_new.is_finite() && inp.mu_new.is_finite() && inp.f_new.is_finite()) {
        return Err(Error::Input("non-finite input to the momentum step".into()));
    }
    let rdt = p.rho / dt;
    let visc = ViscousOperator::new(inp.phi_n, p);
    let c = drag_coefficients(inp.phi_n, p);

    let adv = momentum_advection(inp.u_n, opts.advection);
    let mut shift = MacVelocity::zeros(&g);
    let mut rhs = MacVelocity::zeros(&g);
    let fill = |shift: &mut [f64], rhs: &mut [f64], c: &[f64], un: &[f64], adv: &[f64]| {
        for k in 0..c.len() {
            let (imp, exp) = if c[k] >= 0.0 { (c[k], 0.0) } else { (0.0, c[k]) };
            shift[k] = rdt + imp;
            rhs[k] = rdt * un[k] - p.rho * adv[k] - exp * un[k];
        }
    };
    fill(&mut shift.u, &mut rhs.u, &c.u, inp.u_n.u(), &adv.u);
    fill(&mut shift.v, &mut rhs.v, &c.v, inp.u_n.v(), &adv.v);

    let mut ustar = inp.u_n.clone();
    let cg = CgOptions::relative(opts.visc_tol, opts.max_iter);
    let visc_iterations = visc.solve(&shift, &rhs, &mut ustar, &cg)?;

    let capillary = capillary_force(inp.mu_new, inp.phi_new, inp.f_new, p)?;
    let elastic = elastic_stress_divergence(inp.phi_new, inp.f_new, p.lambda_e)?;
    let external = match inp.external {
        Some(e) => {
            g.check_same(e.grid())?;
            let mut e = e.clone();
            e.zero_boundary();
            e
        }
        None => MacVelocity::zeros(&g),
    };
    let mut ustar2 = ustar;
    let s = dt / p.rho;
    ustar2.axpy(s, &capillary);
    ustar2.axpy(s, &elastic);
    ustar2.axpy(s, &external);

    let proj = project(&ustar2, rdt, opts.proj_tol, opts.max_iter, inp.p_guess)?;
    let drag = darcy_drag(inp.phi_n, &proj.vel, p)?;
    Ok(MomentumStep {
        vel: proj.vel,
        pressure: proj.pressure,
        forces: ForceBundle {
            capillary,
            elastic,
            drag,
            external,
        },
        visc_iterations,
        proj_iterations: proj.iterations,
    })
}

/// Steady variable-viscosity Stokes solution.
#[derive(Clone, Debug)]
pub struct StokesSolution {
    pub vel: MacVelocity,
    pub pressure: ScalarField,
    pub outer_iterations: usize,
    /// Outer (divergence) residual history, one entry per outer iteration.
    pub history: Vec<f64>,
}

/// Solves `−∇·(η(φ)∇u) + ∇p = f`, `∇·u = 0`, `u = 0` on walls, by conjugate
/// gradients on the pressure Schur complement `∇ᵀ A⁻¹ ∇` (inner viscous
/// solves, `η`-scaled preconditioner). The pressure is shifted so that
/// `Σ p/η(φ)·vol = 0`.
pub fn stokes_solve(force: &MacVelocity, phi: &ScalarField, p: &ModelParams, tol: f64, max_iter: usize) -> Result<StokesSolution> {
    let g = *phi.grid();
    g.check_same(force.grid())?;
    if !force.is_finite() {
        return Err(Error::Input("non-finite Stokes forcing".into()));
    }
    let visc = ViscousOperator::new(phi, p);
    let zero_shift = MacVelocity::zeros(&g);
    let inner = CgOptions::relative((tol * 1e-3).max(1e-14), max_iter);
    let n = g.n_cells();

    let mut f = force.clone();
    f.zero_boundary();
    let solve_a = |b: &MacVelocity| -> Result<MacVelocity> {
        let mut x = MacVelocity::zeros(&g);
        visc.solve(&zero_shift, b, &mut x, &inner)?;
        Ok(x)
    };
    // b = −D A⁻¹ f
    let u0 = solve_a(&f)?;
    let mut b = vec![0.0; n];
    divergence_into(&g, u0.u(), u0.v(), &mut b);
    b.iter_mut().for_each(|x| *x = -*x);

    let inner_err = std::cell::RefCell::new(None);
    let apply = |x: &[f64], y: &mut [f64]| {
        let mut gp = MacVelocity::zeros(&g);
        gradient_into(&g, x, &mut gp.u, &mut gp.v);
        match solve_a(&gp) {
            Ok(w) => {
                divergence_into(&g, w.u(), w.v(), y);
                y.iter_mut().for_each(|v| *v = -*v);
            }
            Err(e) => {
                *inner_err.borrow_mut() = Some(e);
                y.iter_mut().for_each(|v| *v = f64::NAN);
            }
        }
    };
    let history = std::cell::RefCell::new(Vec::new());
    let eta_c = visc.cell_viscosity().to_vec();
    let mut pr = vec![0.0; n];
    let outer = CgOptions {
        rel_tol: 0.0,
        abs_tol: tol,
        max_iter,
        norm: ResidualNorm::Max,
        remove_mean: true,
    };
    let res = pcg(
        "Stokes pressure",
        |x, y| {
            apply(x, y);
            let r: f64 = y.iter().fold(0.0, |m, v: &f64| m.max(v.abs()));
            history.borrow_mut().push(r);
        },
        Some(&eta_c),
        &b,
        &mut pr,
        &outer,
    );
    if let Some(e) = inner_err.into_inner() {
        return Err(e);
    }
    let res = res?;

    // η-weighted normalisation
    let wsum: f64 = eta_c.iter().map(|e| 1.0 / e).sum();
    let shift = pr.iter().zip(&eta_c).map(|(p, e)| p / e).sum::<f64>() / wsum;
    pr.iter_mut().for_each(|x| *x -= shift);

    let mut gp = MacVelocity::zeros(&g);
    gradient_into(&g, &pr, &mut gp.u, &mut gp.v);
    let rhs = f.sub(&gp);
    let vel = solve_a(&rhs)?;
    Ok(StokesSolution {
        vel,
        pressure: ScalarField::from_values(&g, pr)?,
        outer_iterations: res.iterations,
        history: history.into_inner(),
    })
}

/// Recovers the pressure of the original stress formulation from the
/// solver's pressure, which absorbs the gradient terms:
/// `p = p̃ − λγ f(φ) − λ|∇φ|²/2`.
pub fn physical_pressure(p_tilde: &ScalarField, phi: &ScalarField, params: &ModelParams) -> Result<ScalarField> {
    let g = *phi.grid();
    g.check_same(p_tilde.grid())?;
    let mut gu = vec![0.0; g.n_xfaces()];
    let mut gv = vec![0.0; g.n_yfaces()];
    gradient_into(&g, phi.values(), &mut gu, &mut gv);
    let mut out = p_tilde.clone();
    for j in 0..g.ny {
        let jh = yface_hi(&g, j);
        for i in 0..g.nx {
            let ih = xface_hi(&g, i);
            let gx2 = 0.5 * (gu[g.xface(i, j)].powi(2) + gu[g.xface(ih, j)].powi(2));
            let gy2 = 0.5 * (gv[g.yface(i, j)].powi(2) + gv[g.yface(i, jh)].powi(2));
            let k = g.cell(i, j);
            out.values_mut()[k] -= params.lambda * params.gamma * double_well(phi.values()[k], params.h)
                + 0.5 * params.lambda * (gx2 + gy2);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::ops::{divergence, gradient_to_faces};
    use crate::params::Coefficient;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn random_scalar(g: &GridSpec, seed: u64, lo: f64, hi: f64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarField::from_values(g, (0..g.n_cells()).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
    }

    fn random_velocity(g: &GridSpec, seed: u64) -> MacVelocity {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut v = MacVelocity::zeros(g);
        v.u_mut().iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        v.v_mut().iter_mut().for_each(|x| *x = rng.random_range(-1.0..1.0));
        v.zero_boundary();
        v
    }

    fn swirl(g: &GridSpec, a: f64) -> MacVelocity {
        MacVelocity::from_stream_function(g, |x, y| a * (PI * x).sin().powi(2) * (PI * y).sin().powi(2))
    }

    #[test]
    fn capillary_examples() {
        let g = GridSpec::unit_square(8, BcMode::Physical).unwrap();
        let p = ModelParams::default();
        let mu = random_scalar(&g, 1, -1.0, 1.0);
        let f = TensorField::identity(&g);
        assert_eq!(capillary_force(&mu, &ScalarField::constant(&g, 0.4), &f, &p).unwrap().max_abs(), 0.0);
        // uniform μ: the force is μ∇φ, a pure gradient
        let phi = random_scalar(&g, 2, 0.0, 1.0);
        let force = capillary_force(&ScalarField::constant(&g, 0.7), &phi, &f, &p).unwrap();
        let expect = gradient_to_faces(&phi).scaled(0.7);
        assert!(force.sub(&expect).max_abs() < 1e-14);
    }

    #[test]
    fn drag_examples() {
        let g = GridSpec::unit_square(8, BcMode::Physical).unwrap();
        let vel = random_velocity(&g, 3);
        let p = ModelParams {
            eta: Coefficient::constant(0.2),
            kappa: Coefficient::constant(0.5),
            ..ModelParams::default()
        };
        assert_eq!(darcy_drag(&ScalarField::constant(&g, 1.0), &vel, &p).unwrap().max_abs(), 0.0);
        let d = darcy_drag(&ScalarField::zeros(&g), &vel, &p).unwrap();
        assert!(d.sub(&vel.scaled(-0.4)).max_abs() < 1e-15);
        assert_eq!(darcy_drag(&ScalarField::zeros(&g), &MacVelocity::zeros(&g), &p).unwrap().max_abs(), 0.0);
    }

    #[test]
    fn viscous_operator_is_symmetric_positive() {
        for bc in [BcMode::Physical, BcMode::Periodic] {
            let g = GridSpec::new(1.0, 1.2, 7, 6, bc).unwrap();
            let phi = random_scalar(&g, 5, -0.2, 1.2);
            let op = ViscousOperator::new(&phi, &ModelParams::default());
            let (a, b) = (random_velocity(&g, 6), random_velocity(&g, 7));
            let ab = a.dot(&op.apply(&b));
            let ba = b.dot(&op.apply(&a));
            assert!((ab - ba).abs() < 1e-12 * ab.abs().max(1.0));
            assert!(op.dissipation(&a) > 0.0);
        }
    }

    #[test]
    fn viscous_operator_is_second_order() {
        // u = sin(πx) sin(πy)... use a periodic field to avoid wall effects
        let err = |n: usize| {
            let g = GridSpec::unit_square(n, BcMode::Periodic).unwrap();
            let k = 2.0 * PI;
            let vel = MacVelocity::from_fn(&g, |x, y| (k * x).sin() * (k * y).cos(), |x, y| (k * x).cos() * (k * y).sin());
            let op = ViscousOperator::constant(&g, 0.3);
            let expect = vel.scaled(0.3 * 2.0 * k * k);
            op.apply(&vel).sub(&expect).max_abs()
        };
        let (e1, e2) = (err(16), err(32));
        assert!((e1 / e2).log2() > 1.9, "{e1} {e2}");
    }

    #[test]
    fn wall_viscous_term_converges() {
        // u = y(1−y) on x-faces, −∂²u/∂y² = 2 away from the walls.
        let g = GridSpec::unit_square(16, BcMode::Physical).unwrap();
        let vel = MacVelocity::from_fn(&g, |_, y| y * (1.0 - y), |_, _| 0.0);
        let op = ViscousOperator::constant(&g, 1.0);
        let r = op.apply(&vel);
        for j in 1..g.ny - 1 {
            for i in 2..g.nx - 1 {
                assert!((r.u()[g.xface(i, j)] - 2.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn centered_advection_does_no_work() {
        for bc in [BcMode::Physical, BcMode::Periodic] {
            let g = GridSpec::new(1.0, 1.0, 12, 10, bc).unwrap();
            let vel = project(&random_velocity(&g, 9), 1.0, 1e-13, 10_000, None).unwrap().vel;
            assert!(divergence(&vel).max_abs() < 1e-12);
            let w = vel.dot(&momentum_advection(&vel, Advection::Centered));
            assert!(w.abs() < 1e-12, "{w}");
            let w_up = vel.dot(&momentum_advection(&vel, Advection::Upwind));
            assert!(w_up > 0.0);
        }
    }

    #[test]
    fn advection_of_uniform_flow_vanishes() {
        let g = GridSpec::unit_square(8, BcMode::Periodic).unwrap();
        let vel = MacVelocity::from_fn(&g, |_, _| 1.0, |_, _| 0.5);
        for s in [Advection::Upwind, Advection::Centered] {
            assert!(momentum_advection(&vel, s).max_abs() < 1e-14);
        }
    }

    #[test]
    fn advection_matches_analytic_taylor_green() {
        // u·∇u for u = (sin x cos y, −cos x sin y) equals −∇(cos2x + cos2y)/4 ...
        let err = |n: usize| {
            let g = GridSpec::unit_square(n, BcMode::Periodic).unwrap();
            let k = 2.0 * PI;
            let vel = MacVelocity::from_stream_function(&g, |x, y| (k * x).sin() * (k * y).sin() / k);
            let a = momentum_advection(&vel, Advection::Centered);
            // u = sin(kx)cos(ky), v = −cos(kx)sin(ky); (u·∇)u = (k/2) sin(2kx), (u·∇)v = (k/2) sin(2ky)
            let expect = MacVelocity::from_fn(&g, |x, _| 0.5 * k * (2.0 * k * x).sin(), |_, y| 0.5 * k * (2.0 * k * y).sin());
            a.sub(&expect).max_abs()
        };
        let (e1, e2) = (err(16), err(32));
        assert!((e1 / e2).log2() > 1.8, "{e1} {e2}");
    }

    #[test]
    fn projection_properties() {
        let g = GridSpec::unit_square(16, BcMode::Physical).unwrap();
        let v = random_velocity(&g, 11);
        let pr = project(&v, 10.0, 1e-10, 10_000, None).unwrap();
        assert!(divergence(&pr.vel).max_abs() <= 1e-10);
        assert_eq!(pr.vel.max_boundary_abs(), 0.0);
        assert!(crate::grid::ops::mean_value(&pr.pressure).abs() < 1e-12);
        let again = project(&pr.vel, 10.0, 1e-10, 10_000, None).unwrap();
        assert!(again.vel.sub(&pr.vel).max_abs() <= 1e-9);
        // gradient annihilation
        let q = random_scalar(&g, 12, -1.0, 1.0);
        let mut w = pr.vel.clone();
        w.axpy(1.0, &gradient_to_faces(&q));
        let p2 = project(&w, 1.0, 1e-11, 10_000, None).unwrap();
        assert!(p2.vel.sub(&pr.vel).max_abs() < 1e-9);
    }

    fn rest_inputs(g: &GridSpec) -> (MacVelocity, ScalarField, ScalarField, TensorField) {
        (MacVelocity::zeros(g), ScalarField::constant(g, 0.3), ScalarField::zeros(g), TensorField::identity(g))
    }

    #[test]
    fn rest_state_stays_at_rest() {
        let g = GridSpec::unit_square(8, BcMode::Physical).unwrap();
        let (u, phi, mu, f) = rest_inputs(&g);
        let inp = MomentumInputs {
            u_n: &u,
            phi_n: &phi,
            phi_new: &phi,
            mu_new: &mu,
            f_new: &f,
            p_guess: None,
            external: None,
        };
        let s = momentum_step(&inp, 1e-2, &ModelParams::default(), &MomentumOptions::default()).unwrap();
        assert_eq!(s.vel.max_abs(), 0.0);
        assert_eq!(s.pressure.max_abs(), 0.0);
    }

    #[test]
    fn gradient_forcing_is_annihilated() {
        let g = GridSpec::unit_square(16, BcMode::Physical).unwrap();
        let p = ModelParams::default();
        let u = project(&swirl(&g, 0.1), 1.0, 1e-12, 10_000, None).unwrap().vel;
        let phi = ScalarField::from_fn(&g, |x, y| 0.5 + 0.3 * (PI * x).cos() * (PI * y).cos());
        let mu = ScalarField::constant(&g, 0.2);
        let f = TensorField::identity(&g);
        let opts = MomentumOptions::default();
        let mk = |ext: Option<&MacVelocity>| {
            let inp = MomentumInputs {
                u_n: &u,
                phi_n: &phi,
                phi_new: &phi,
                mu_new: &mu,
                f_new: &f,
                p_guess: None,
                external: ext,
            };
            momentum_step(&inp, 1e-2, &p, &opts).unwrap()
        };
        let base = mk(None);
        let grad = gradient_to_faces(&random_scalar(&g, 4, -1.0, 1.0));
        let forced = mk(Some(&grad));
        assert!(forced.vel.sub(&base.vel).max_abs() <= 10.0 * opts.proj_tol);
        assert!(divergence(&base.vel).max_abs() <= opts.proj_tol);
    }

    #[test]
    fn taylor_green_decay_rate() {
        // periodic, η const, no drag: amplitude decays like exp(−2k²(η/ρ)t)
        let run = |dt: f64| {
            let g = GridSpec::unit_square(32, BcMode::Periodic).unwrap();
            let eta = 0.05;
            let p = ModelParams {
                eta: Coefficient::constant(eta),
                kappa: Coefficient::constant(0.5),
                ..ModelParams::default()
            };
            let k = 2.0 * PI;
            let psi = |x: f64, y: f64| (k * x).sin() * (k * y).sin() / k;
            let mut u = MacVelocity::from_stream_function(&g, psi);
            let u0 = u.clone();
            let phi = ScalarField::constant(&g, 1.0);
            let mu = ScalarField::zeros(&g);
            let f = TensorField::identity(&g);
            let opts = MomentumOptions {
                advection: Advection::Centered,
                ..MomentumOptions::default()
            };
            let t_end = 0.2;
            let steps = (t_end / dt).round() as usize;
            let mut pr = None;
            for _ in 0..steps {
                let inp = MomentumInputs {
                    u_n: &u,
                    phi_n: &phi,
                    phi_new: &phi,
                    mu_new: &mu,
                    f_new: &f,
                    p_guess: pr.as_ref(),
                    external: None,
                };
                let s = momentum_step(&inp, dt, &p, &opts).unwrap();
                u = s.vel;
                pr = Some(s.pressure);
            }
            // discrete eigenvalue of the 5-point operator on this mode
            let h = g.hx();
            let lam = 2.0 * (2.0 - 2.0 * (k * h).cos()) / (h * h);
            let exact = (-lam * eta * t_end).exp();
            (u.dot(&u0) / u0.dot(&u0) - exact).abs()
        };
        let (e1, e2) = (run(0.02), run(0.01));
        assert!(e1 < 0.05 && (e1 / e2).log2() > 0.9, "{e1} {e2}");
    }

    #[test]
    fn drag_work_is_dissipative() {
        let g = GridSpec::unit_square(12, BcMode::Physical).unwrap();
        let phi = random_scalar(&g, 8, 0.0, 1.0);
        let vel = random_velocity(&g, 9);
        let p = ModelParams::default();
        let d = darcy_drag(&phi, &vel, &p).unwrap();
        assert!(d.dot(&vel) <= 0.0);
        let (dd, dphi) = drag_budget(&phi, &vel, &p);
        assert!((d.dot(&vel) + dd - dphi).abs() < 1e-12 * dd.max(1.0));
    }

    #[test]
    fn stokes_examples() {
        let g = GridSpec::unit_square(12, BcMode::Physical).unwrap();
        let phi = ScalarField::from_fn(&g, |x, y| 0.5 + 0.4 * (PI * x).cos() * (PI * y).cos());
        let p = ModelParams::default();
        let s = stokes_solve(&MacVelocity::zeros(&g), &phi, &p, 1e-10, 2000).unwrap();
        assert_eq!(s.vel.max_abs(), 0.0);
        assert_eq!(s.pressure.max_abs(), 0.0);

        let q = random_scalar(&g, 3, -1.0, 1.0);
        let s = stokes_solve(&gradient_to_faces(&q), &phi, &p, 1e-10, 2000).unwrap();
        assert!(s.vel.max_abs() < 1e-8, "{}", s.vel.max_abs());
        let eta: Vec<f64> = phi.values().iter().map(|&x| p.eta(x)).collect();
        let wsum: f64 = eta.iter().map(|e| 1.0 / e).sum();
        let shift = q.values().iter().zip(&eta).map(|(q, e)| q / e).sum::<f64>() / wsum;
        let expect = q.map(|x| x - shift);
        assert!(s.pressure.sub(&expect).max_abs() < 1e-7);
        let norm: f64 = s.pressure.values().iter().zip(&eta).map(|(p, e)| p / e).sum();
        assert!(norm.abs() < 1e-10);
    }

    #[test]
    fn stokes_manufactured_second_order() {
        // ψ = sin²(πx) sin²(πy), η const; f = −ηΔu + ∇p with p = cos(πx)cos(πy)
        let eta = 0.05;
        let p = ModelParams {
            eta: Coefficient::constant(eta),
            ..ModelParams::default()
        };
        let err = |n: usize| {
            let g = GridSpec::unit_square(n, BcMode::Physical).unwrap();
            let s2 = |t: f64| (PI * t).sin().powi(2);
            let ds2 = |t: f64| PI * (2.0 * PI * t).sin();
            let dds2 = |t: f64| 2.0 * PI * PI * (2.0 * PI * t).cos();
            let ddds2 = |t: f64| -4.0 * PI.powi(3) * (2.0 * PI * t).sin();
            // u = ψ_y = s2(x) ds2(y), v = −ψ_x = −ds2(x) s2(y)
            let ue = |x: f64, y: f64| s2(x) * ds2(y);
            let ve = |x: f64, y: f64| -ds2(x) * s2(y);
            let lap_u = |x: f64, y: f64| dds2(x) * ds2(y) + s2(x) * ddds2(y);
            let lap_v = |x: f64, y: f64| -(ddds2(x) * s2(y) + ds2(x) * dds2(y));
            let px = |x: f64, y: f64| -PI * (PI * x).sin() * (PI * y).cos();
            let py = |x: f64, y: f64| -PI * (PI * x).cos() * (PI * y).sin();
            let f = MacVelocity::from_fn(&g, |x, y| -eta * lap_u(x, y) + px(x, y), |x, y| -eta * lap_v(x, y) + py(x, y));
            let s = stokes_solve(&f, &ScalarField::constant(&g, 0.5), &p, 1e-11, 5000).unwrap();
            let exact = MacVelocity::from_fn(&g, ue, ve);
            s.vel.sub(&exact).norm()
        };
        let (e1, e2) = (err(16), err(32));
        assert!((e1 / e2).log2() > 1.8, "{e1} {e2}");
    }

    #[test]
    fn physical_pressure_removes_gradient_terms() {
        let g = GridSpec::unit_square(6, BcMode::Physical).unwrap();
        let p = ModelParams::default();
        let phi = ScalarField::constant(&g, 0.25);
        let pt = ScalarField::constant(&g, 1.0);
        let out = physical_pressure(&pt, &phi, &p).unwrap();
        let expect = 1.0 - p.lambda * p.gamma * double_well(0.25, p.h);
        assert!(out.values().iter().all(|&x| (x - expect).abs() < 1e-14));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn post_projection_divergence(seed in 0u64..1000, dt in 1e-3f64..1e-1) {
            let g = GridSpec::unit_square(12, BcMode::Physical).unwrap();
            let phi = random_scalar(&g, seed, 0.0, 1.0);
            let mu = random_scalar(&g, seed + 1, -1.0, 1.0);
            let u = random_velocity(&g, seed + 2).scaled(0.1);
            let f = TensorField::identity(&g);
            let inp = MomentumInputs { u_n: &u, phi_n: &phi, phi_new: &phi, mu_new: &mu, f_new: &f, p_guess: None, external: None };
            let opts = MomentumOptions::default();
            let s = momentum_step(&inp, dt, &ModelParams::default(), &opts).unwrap();
            prop_assert!(divergence(&s.vel).max_abs() <= opts.proj_tol);
            prop_assert_eq!(s.vel.max_boundary_abs(), 0.0);
            prop_assert!(s.forces.drag.dot(&s.vel) <= 0.0);
        }
    }
}
