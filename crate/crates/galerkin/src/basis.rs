//! Orthonormal eigenbases of the discrete Stokes operator, of the Neumann
//! operator `−Δ + I` on cell scalars, and of the componentwise Neumann
//! Laplacian on cell tensors, with the orthogonal projections onto their
//! spans.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use pfsi_core::checkpoint::{read_header, Decoder, Encoder};
use pfsi_core::grid::ops::{divergence_into, laplace_into};
use pfsi_core::grid::{GridSpec, MacVelocity, ScalarField, TensorField};
use pfsi_core::momentum::{project, ViscousOperator};

use crate::eigen::{dense, lobpcg, sorted_eigen, EigenPairs, SymOp};
use crate::GalerkinError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BasisKind {
    /// Eigenvectors of the no-slip vector Laplacian restricted to discretely
    /// divergence-free face fields.
    Stokes,
    /// Eigenvectors of `−Δ + I` on cell scalars (Neumann or periodic).
    NeumannScalar,
    /// Eigenvectors of the componentwise Neumann Laplacian `−Δ` on cell
    /// tensors.
    Tensor,
}

impl BasisKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BasisKind::Stokes => "stokes",
            BasisKind::NeumannScalar => "neumann_scalar",
            BasisKind::Tensor => "tensor",
        }
    }

    fn code(self) -> u32 {
        match self {
            BasisKind::Stokes => 0,
            BasisKind::NeumannScalar => 1,
            BasisKind::Tensor => 2,
        }
    }

    fn from_code(c: u32) -> Option<Self> {
        [BasisKind::Stokes, BasisKind::NeumannScalar, BasisKind::Tensor].into_iter().find(|k| k.code() == c)
    }
}

/// Unknown face velocities: every x-face, then every y-face, that is not a
/// wall face.
#[derive(Clone, Debug, PartialEq)]
pub struct VelocityDofs {
    grid: GridSpec,
    xfaces: Vec<usize>,
    yfaces: Vec<usize>,
}

impl VelocityDofs {
    pub fn new(g: &GridSpec) -> Self {
        let mut xfaces = Vec::new();
        for j in 0..g.ny {
            for i in 0..g.nfx() {
                if !g.is_boundary_xface(i) {
                    xfaces.push(g.xface(i, j));
                }
            }
        }
        let mut yfaces = Vec::new();
        for j in 0..g.nfy() {
            if g.is_boundary_yface(j) {
                continue;
            }
            for i in 0..g.nx {
                yfaces.push(g.yface(i, j));
            }
        }
        VelocityDofs { grid: *g, xfaces, yfaces }
    }

    pub fn len(&self) -> usize {
        self.xfaces.len() + self.yfaces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn gather(&self, vel: &MacVelocity) -> Vec<f64> {
        let mut out: Vec<f64> = self.xfaces.iter().map(|&k| vel.u()[k]).collect();
        out.extend(self.yfaces.iter().map(|&k| vel.v()[k]));
        out
    }

    pub fn scatter(&self, x: &[f64]) -> MacVelocity {
        let mut vel = MacVelocity::zeros(&self.grid);
        let nx = self.xfaces.len();
        for (&k, &val) in self.xfaces.iter().zip(x) {
            vel.u_mut()[k] = val;
        }
        for (&k, &val) in self.yfaces.iter().zip(&x[nx..]) {
            vel.v_mut()[k] = val;
        }
        vel
    }
}

struct NeumannOp(GridSpec);

impl SymOp for NeumannOp {
    fn dim(&self) -> usize {
        self.0.n_cells()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        laplace_into(&self.0, x, y);
        for (o, xi) in y.iter_mut().zip(x) {
            *o = xi - *o;
        }
    }
}

/// `P(−Δ)P` on the velocity unknowns with `P` the iterative Leray projection.
struct StokesOp {
    dofs: VelocityDofs,
    lap: ViscousOperator,
    proj_tol: f64,
}

impl SymOp for StokesOp {
    fn dim(&self) -> usize {
        self.dofs.len()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let v = self.dofs.scatter(x);
        y.copy_from_slice(&self.dofs.gather(&self.lap.apply(&v)));
    }
    fn constrain(&self, x: &mut [f64]) {
        let v = self.dofs.scatter(x);
        let pv = project(&v, 1.0, self.proj_tol, 100_000, None).expect("projection converges on a valid grid");
        x.copy_from_slice(&self.dofs.gather(&pv.vel));
    }
}

/// Orthonormal basis of the discretely divergence-free velocity unknowns:
/// the null space of the assembled divergence matrix.
fn divergence_free_subspace(dofs: &VelocityDofs) -> DMatrix<f64> {
    let g = dofs.grid;
    let nd = dofs.len();
    let mut dm = DMatrix::zeros(g.n_cells(), nd);
    let mut e = vec![0.0; nd];
    let mut div = vec![0.0; g.n_cells()];
    for k in 0..nd {
        e[k] = 1.0;
        let v = dofs.scatter(&e);
        divergence_into(&g, v.u(), v.v(), &mut div);
        dm.column_mut(k).copy_from_slice(&div);
        e[k] = 0.0;
    }
    let (vals, vecs) = sorted_eigen(dm.transpose() * &dm);
    let top = vals.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let null = vals.iter().take_while(|&&v| v < 1e-10 * top).count();
    vecs.columns(0, null).clone_owned()
}

/// How the leading eigenpairs are computed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Route {
    /// Iterative for a few modes, dense once the block would be a sizeable
    /// fraction of the dimension.
    #[default]
    Auto,
    Iterative,
    Dense,
}

/// Leading `n` eigenpairs of one discrete operator. Vectors are stored as
/// columns in unknown coordinates, orthonormal in the volume-weighted
/// discrete `L²` product of the corresponding field type.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenBasis {
    pub kind: BasisKind,
    pub grid: GridSpec,
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Number of independent modes of `kind` on `g`.
pub fn available_dimension(kind: BasisKind, g: &GridSpec) -> usize {
    match kind {
        BasisKind::NeumannScalar => g.n_cells(),
        BasisKind::Tensor => 4 * g.n_cells(),
        // the divergence has rank n_cells − 1 (constants are its cokernel)
        BasisKind::Stokes => VelocityDofs::new(g).len() + 1 - g.n_cells(),
    }
}

fn scale_pairs(e: EigenPairs, g: &GridSpec) -> (Vec<f64>, DMatrix<f64>) {
    (e.values, e.vectors / g.cell_volume().sqrt())
}

/// Builds the leading `n` eigenpairs of `kind` with residual below `tol`.
pub fn build_basis(kind: BasisKind, n: usize, g: &GridSpec, tol: f64) -> Result<EigenBasis, GalerkinError> {
    build_basis_with(kind, n, g, tol, Route::Auto)
}

pub fn build_basis_with(kind: BasisKind, n: usize, g: &GridSpec, tol: f64, route: Route) -> Result<EigenBasis, GalerkinError> {
    g.validate()?;
    let avail = available_dimension(kind, g);
    if n == 0 || n > avail {
        return Err(GalerkinError::Dimension { requested: n, available: avail });
    }
    let block = n + (n / 4).max(2);
    let dense_route = match route {
        Route::Auto => 6 * block > avail,
        Route::Iterative => false,
        Route::Dense => true,
    };
    let max_iter = 20_000;
    let (eigenvalues, vectors) = match kind {
        BasisKind::NeumannScalar => {
            let op = NeumannOp(*g);
            let e = if dense_route { dense(&op, n, None)? } else { lobpcg(&op, n, tol, max_iter, 11)? };
            check_residual(&e, tol)?;
            scale_pairs(e, g)
        }
        BasisKind::Stokes => {
            let dofs = VelocityDofs::new(g);
            let op = StokesOp {
                lap: ViscousOperator::constant(g, 1.0),
                proj_tol: 1e-12,
                dofs,
            };
            let e = if dense_route {
                let q = divergence_free_subspace(&op.dofs);
                let free = StokesOpDense(&op);
                dense(&free, n, Some(&q))?
            } else {
                lobpcg(&op, n, tol, max_iter, 13)?
            };
            check_residual(&e, tol)?;
            scale_pairs(e, g)
        }
        BasisKind::Tensor => {
            let ns = n.div_ceil(4);
            let scalar = build_basis_with(BasisKind::NeumannScalar, ns, g, tol, route)?;
            let nc = g.n_cells();
            let mut vectors = DMatrix::zeros(4 * nc, n);
            let mut values = Vec::with_capacity(n);
            for m in 0..n {
                let (k, comp) = (m / 4, m % 4);
                vectors.view_mut((comp * nc, m), (nc, 1)).copy_from(&scalar.vectors.column(k));
                values.push(scalar.eigenvalues[k] - 1.0);
            }
            (values, vectors)
        }
    };
    Ok(EigenBasis {
        kind,
        grid: *g,
        eigenvalues,
        vectors,
    })
}

/// The Stokes operator without the iterative projection, for use on an
/// exact divergence-free subspace.
struct StokesOpDense<'a>(&'a StokesOp);

impl SymOp for StokesOpDense<'_> {
    fn dim(&self) -> usize {
        self.0.dim()
    }
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        self.0.apply(x, y)
    }
}

fn check_residual(e: &EigenPairs, tol: f64) -> Result<(), GalerkinError> {
    if e.residual <= tol.max(1e-9) {
        Ok(())
    } else {
        Err(GalerkinError::NotConverged {
            what: "eigenbasis",
            residual: e.residual,
            iterations: e.iterations,
        })
    }
}

impl EigenBasis {
    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    /// The first `n` modes.
    pub fn truncate(&self, n: usize) -> Result<EigenBasis, GalerkinError> {
        if n == 0 || n > self.n() {
            return Err(GalerkinError::Dimension {
                requested: n,
                available: self.n(),
            });
        }
        Ok(EigenBasis {
            kind: self.kind,
            grid: self.grid,
            eigenvalues: self.eigenvalues[..n].to_vec(),
            vectors: self.vectors.columns(0, n).clone_owned(),
        })
    }

    /// `max |G − I|` of the Gram matrix in the field inner product.
    pub fn gram_error(&self) -> f64 {
        let gram = self.vectors.transpose() * &self.vectors * self.grid.cell_volume();
        (gram - DMatrix::identity(self.n(), self.n())).amax()
    }

    fn check_kind(&self, kind: BasisKind) -> Result<(), GalerkinError> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(GalerkinError::Input(format!("expected a {} basis, got {}", kind.as_str(), self.kind.as_str())))
        }
    }

    fn check_grid(&self, g: &GridSpec) -> Result<(), GalerkinError> {
        if *g == self.grid {
            Ok(())
        } else {
            Err(pfsi_core::Error::GridMismatch {
                expected: format!("{:?}", self.grid),
                found: format!("{g:?}"),
            }
            .into())
        }
    }

    /// Coefficients `(x, b_k)` of a vector in unknown coordinates.
    pub fn project_dofs(&self, x: &[f64]) -> DVector<f64> {
        self.vectors.tr_mul(&DVector::from_column_slice(x)) * self.grid.cell_volume()
    }

    pub fn lift_dofs(&self, c: &DVector<f64>) -> Vec<f64> {
        (&self.vectors * c).as_slice().to_vec()
    }

    pub fn project_velocity(&self, v: &MacVelocity) -> Result<DVector<f64>, GalerkinError> {
        self.check_kind(BasisKind::Stokes)?;
        self.check_grid(v.grid())?;
        Ok(self.project_dofs(&VelocityDofs::new(&self.grid).gather(v)))
    }

    pub fn lift_velocity(&self, c: &DVector<f64>) -> Result<MacVelocity, GalerkinError> {
        self.check_kind(BasisKind::Stokes)?;
        self.check_len(c)?;
        Ok(VelocityDofs::new(&self.grid).scatter(&self.lift_dofs(c)))
    }

    pub fn project_scalar(&self, s: &ScalarField) -> Result<DVector<f64>, GalerkinError> {
        self.check_kind(BasisKind::NeumannScalar)?;
        self.check_grid(s.grid())?;
        Ok(self.project_dofs(s.values()))
    }

    pub fn lift_scalar(&self, c: &DVector<f64>) -> Result<ScalarField, GalerkinError> {
        self.check_kind(BasisKind::NeumannScalar)?;
        self.check_len(c)?;
        Ok(ScalarField::from_values(&self.grid, self.lift_dofs(c))?)
    }

    pub fn project_tensor(&self, f: &TensorField) -> Result<DVector<f64>, GalerkinError> {
        self.check_kind(BasisKind::Tensor)?;
        self.check_grid(f.grid())?;
        Ok(self.project_dofs(&f.components().concat()))
    }

    pub fn lift_tensor(&self, c: &DVector<f64>) -> Result<TensorField, GalerkinError> {
        self.check_kind(BasisKind::Tensor)?;
        self.check_len(c)?;
        let x = self.lift_dofs(c);
        let nc = self.grid.n_cells();
        let comps = [0, 1, 2, 3].map(|k| x[k * nc..(k + 1) * nc].to_vec());
        Ok(TensorField::from_components(&self.grid, comps)?)
    }

    fn check_len(&self, c: &DVector<f64>) -> Result<(), GalerkinError> {
        if c.len() == self.n() {
            Ok(())
        } else {
            Err(GalerkinError::Input(format!("{} coefficients for a basis of {} modes", c.len(), self.n())))
        }
    }
}

pub const BASIS_MAGIC: &[u8; 4] = b"PFSB";
pub const BASIS_VERSION: u32 = 1;

/// Cache layout: magic `PFSB`, version, grid (as in checkpoints), kind
/// (`u32`: 0 stokes, 1 neumann_scalar, 2 tensor), `n: u64`, then the
/// eigenvalues and the column-major vector matrix as length-prefixed `f64`
/// arrays.
pub fn encode_basis(b: &EigenBasis) -> Vec<u8> {
    let mut e = Encoder::new();
    e.bytes(BASIS_MAGIC);
    e.u32(BASIS_VERSION);
    e.grid(&b.grid);
    e.u32(b.kind.code());
    e.u64(b.n() as u64);
    e.f64s(&b.eigenvalues);
    e.f64s(b.vectors.as_slice());
    e.finish()
}

pub fn decode_basis(data: &[u8], path: &Path) -> Result<EigenBasis, GalerkinError> {
    let mut d = Decoder::new(data, path);
    read_header(&mut d, BASIS_MAGIC, BASIS_VERSION)?;
    let grid = d.grid()?;
    let code = d.u32()?;
    let kind = BasisKind::from_code(code).ok_or_else(|| d.error(format!("unknown basis kind {code}")))?;
    let n = d.u64()? as usize;
    let rows = match kind {
        BasisKind::Stokes => VelocityDofs::new(&grid).len(),
        BasisKind::NeumannScalar => grid.n_cells(),
        BasisKind::Tensor => 4 * grid.n_cells(),
    };
    let eigenvalues = d.f64s(n, "eigenvalues")?;
    let vals = d.f64s(rows * n, "eigenvectors")?;
    d.finish()?;
    Ok(EigenBasis {
        kind,
        grid,
        eigenvalues,
        vectors: DMatrix::from_vec(rows, n, vals),
    })
}

pub fn save_basis(path: &Path, b: &EigenBasis) -> Result<(), GalerkinError> {
    std::fs::write(path, encode_basis(b)).map_err(|e| pfsi_core::Error::io(path, e).into())
}

pub fn load_basis(path: &Path) -> Result<EigenBasis, GalerkinError> {
    let data = std::fs::read(path).map_err(|e| pfsi_core::Error::io(path, e))?;
    decode_basis(&data, path)
}
