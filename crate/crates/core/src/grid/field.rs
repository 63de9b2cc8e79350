use super::GridSpec;
use crate::error::{Error, Result};

/// One value per cell, stored row-major (`i + nx * j`).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    pub fn constant(grid: &GridSpec, c: f64) -> Self {
        ScalarField {
            grid: *grid,
            values: vec![c; grid.n_cells()],
        }
    }

    /// Samples `f` at the cell centres.
    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64, f64) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.n_cells());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.cell_center(i, j);
                values.push(f(x, y));
            }
        }
        ScalarField { grid: *grid, values }
    }

    pub fn from_values(grid: &GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_cells() {
            return Err(Error::Config(format!(
                "scalar field needs {} values, got {}",
                grid.n_cells(),
                values.len()
            )));
        }
        Ok(ScalarField { grid: *grid, values })
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    #[inline]
    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.cell(i, j)]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let k = self.grid.cell(i, j);
        self.values[k] = v;
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        ScalarField {
            grid: self.grid,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Volume-weighted inner product.
    pub fn dot(&self, other: &ScalarField) -> f64 {
        self.grid.cell_volume() * dot(&self.values, &other.values)
    }

    /// Discrete L² norm.
    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &ScalarField) {
        axpy(&mut self.values, a, &other.values);
    }

    pub fn scaled(&self, a: f64) -> Self {
        self.map(|v| a * v)
    }

    pub fn sub(&self, other: &ScalarField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }
}

/// Face-normal velocity components on the staggered grid.
///
/// `u` holds `nfx × ny` x-face values, `v` holds `nx × nfy` y-face values.
/// In physical mode the boundary faces are stored and must stay zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MacVelocity {
    grid: GridSpec,
    pub(crate) u: Vec<f64>,
    pub(crate) v: Vec<f64>,
}

impl MacVelocity {
    pub fn zeros(grid: &GridSpec) -> Self {
        MacVelocity {
            grid: *grid,
            u: vec![0.0; grid.n_xfaces()],
            v: vec![0.0; grid.n_yfaces()],
        }
    }

    /// Samples `(fu, fv)` at the face centres. Boundary faces in physical mode
    /// are forced to zero regardless of `fu`/`fv`.
    pub fn from_fn(
        grid: &GridSpec,
        fu: impl Fn(f64, f64) -> f64,
        fv: impl Fn(f64, f64) -> f64,
    ) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nfx() {
                if !grid.is_boundary_xface(i) {
                    let (x, y) = grid.xface_center(i, j);
                    out.u[grid.xface(i, j)] = fu(x, y);
                }
            }
        }
        for j in 0..grid.nfy() {
            for i in 0..grid.nx {
                if !grid.is_boundary_yface(j) {
                    let (x, y) = grid.yface_center(i, j);
                    out.v[grid.yface(i, j)] = fv(x, y);
                }
            }
        }
        out
    }

    /// Samples the discrete curl of a stream function given at grid nodes:
    /// `u = ∂ψ/∂y`, `v = -∂ψ/∂x`. The result is discretely divergence-free
    /// up to rounding. In physical mode `ψ` must vanish on the walls for the
    /// boundary faces to carry no flux; the boundary faces are zeroed anyway.
    pub fn from_stream_function(grid: &GridSpec, psi: impl Fn(f64, f64) -> f64) -> Self {
        let (hx, hy) = (grid.hx(), grid.hy());
        Self::from_fn(
            grid,
            |x, y| (psi(x, y + 0.5 * hy) - psi(x, y - 0.5 * hy)) / hy,
            |x, y| -(psi(x + 0.5 * hx, y) - psi(x - 0.5 * hx, y)) / hx,
        )
    }

    pub fn from_components(grid: &GridSpec, u: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if u.len() != grid.n_xfaces() || v.len() != grid.n_yfaces() {
            return Err(Error::Config(format!(
                "velocity needs {}+{} face values, got {}+{}",
                grid.n_xfaces(),
                grid.n_yfaces(),
                u.len(),
                v.len()
            )));
        }
        Ok(MacVelocity { grid: *grid, u, v })
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    #[inline]
    pub fn u(&self) -> &[f64] {
        &self.u
    }

    #[inline]
    pub fn v(&self) -> &[f64] {
        &self.v
    }

    #[inline]
    pub fn u_mut(&mut self) -> &mut [f64] {
        &mut self.u
    }

    #[inline]
    pub fn v_mut(&mut self) -> &mut [f64] {
        &mut self.v
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(self.v.iter()).all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.u
            .iter()
            .chain(self.v.iter())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Volume-weighted inner product over faces. Boundary faces carry half a
    /// cell of volume; in physical mode they are zero for velocities anyway.
    pub fn dot(&self, other: &MacVelocity) -> f64 {
        let g = &self.grid;
        let mut s = dot(&self.u, &other.u) + dot(&self.v, &other.v);
        if g.bc == super::BcMode::Physical {
            for j in 0..g.ny {
                for i in [0, g.nx] {
                    let k = g.xface(i, j);
                    s -= 0.5 * self.u[k] * other.u[k];
                }
            }
            for j in [0, g.ny] {
                for i in 0..g.nx {
                    let k = g.yface(i, j);
                    s -= 0.5 * self.v[k] * other.v[k];
                }
            }
        }
        g.cell_volume() * s
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn axpy(&mut self, a: f64, other: &MacVelocity) {
        axpy(&mut self.u, a, &other.u);
        axpy(&mut self.v, a, &other.v);
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.u.iter_mut().chain(out.v.iter_mut()).for_each(|x| *x *= a);
        out
    }

    pub fn sub(&self, other: &MacVelocity) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    /// Sets every boundary-face value to zero (physical mode only).
    pub fn zero_boundary(&mut self) {
        let g = self.grid;
        if g.bc != super::BcMode::Physical {
            return;
        }
        for j in 0..g.ny {
            self.u[g.xface(0, j)] = 0.0;
            self.u[g.xface(g.nx, j)] = 0.0;
        }
        for i in 0..g.nx {
            self.v[g.yface(i, 0)] = 0.0;
            self.v[g.yface(i, g.ny)] = 0.0;
        }
    }

    /// Largest absolute boundary-face value (0 for periodic grids).
    pub fn max_boundary_abs(&self) -> f64 {
        let g = &self.grid;
        if g.bc != super::BcMode::Physical {
            return 0.0;
        }
        let mut m: f64 = 0.0;
        for j in 0..g.ny {
            m = m.max(self.u[g.xface(0, j)].abs()).max(self.u[g.xface(g.nx, j)].abs());
        }
        for i in 0..g.nx {
            m = m.max(self.v[g.yface(i, 0)].abs()).max(self.v[g.yface(i, g.ny)].abs());
        }
        m
    }
}

/// A 2×2 tensor per cell, stored as four component planes in row-major
/// component order `[F11, F12, F21, F22]`, with `F^{ij} = ∂xⁱ/∂Xʲ`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    grid: GridSpec,
    pub(crate) comps: [Vec<f64>; 4],
}

impl TensorField {
    pub fn zeros(grid: &GridSpec) -> Self {
        Self::uniform(grid, [[0.0; 2]; 2])
    }

    pub fn identity(grid: &GridSpec) -> Self {
        Self::uniform(grid, [[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn uniform(grid: &GridSpec, m: [[f64; 2]; 2]) -> Self {
        let n = grid.n_cells();
        TensorField {
            grid: *grid,
            comps: [
                vec![m[0][0]; n],
                vec![m[0][1]; n],
                vec![m[1][0]; n],
                vec![m[1][1]; n],
            ],
        }
    }

    pub fn from_fn(grid: &GridSpec, f: impl Fn(f64, f64) -> [[f64; 2]; 2]) -> Self {
        let mut out = Self::zeros(grid);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.cell_center(i, j);
                out.set(grid.cell(i, j), f(x, y));
            }
        }
        out
    }

    pub fn from_components(grid: &GridSpec, comps: [Vec<f64>; 4]) -> Result<Self> {
        if comps.iter().any(|c| c.len() != grid.n_cells()) {
            return Err(Error::Config(format!(
                "tensor field components need {} values each",
                grid.n_cells()
            )));
        }
        Ok(TensorField { grid: *grid, comps })
    }

    #[inline]
    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    /// Component plane `(row, col)`.
    #[inline]
    pub fn comp(&self, row: usize, col: usize) -> &[f64] {
        &self.comps[2 * row + col]
    }

    #[inline]
    pub fn comp_mut(&mut self, row: usize, col: usize) -> &mut [f64] {
        &mut self.comps[2 * row + col]
    }

    #[inline]
    pub fn components(&self) -> &[Vec<f64>; 4] {
        &self.comps
    }

    #[inline]
    pub fn get(&self, cell: usize) -> [[f64; 2]; 2] {
        [
            [self.comps[0][cell], self.comps[1][cell]],
            [self.comps[2][cell], self.comps[3][cell]],
        ]
    }

    #[inline]
    pub fn set(&mut self, cell: usize, m: [[f64; 2]; 2]) {
        self.comps[0][cell] = m[0][0];
        self.comps[1][cell] = m[0][1];
        self.comps[2][cell] = m[1][0];
        self.comps[3][cell] = m[1][1];
    }

    pub fn is_finite(&self) -> bool {
        self.comps.iter().flatten().all(|v| v.is_finite())
    }

    /// Frobenius inner product integrated over the domain.
    pub fn dot(&self, other: &TensorField) -> f64 {
        self.grid.cell_volume()
            * self
                .comps
                .iter()
                .zip(other.comps.iter())
                .map(|(a, b)| dot(a, b))
                .sum::<f64>()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn axpy(&mut self, a: f64, other: &TensorField) {
        for (x, y) in self.comps.iter_mut().zip(other.comps.iter()) {
            axpy(x, a, y);
        }
    }

    pub fn sub(&self, other: &TensorField) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.comps.iter_mut().flatten().for_each(|x| *x *= a);
        out
    }
}

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub(crate) fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    debug_assert_eq!(x.len(), y.len());
    y.iter_mut().zip(x).for_each(|(y, x)| *y += a * x);
}
