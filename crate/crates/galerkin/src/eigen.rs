//! Symmetric eigensolvers on plain coordinate vectors: a block locally
//! optimal iteration (repeated Rayleigh–Ritz on `[X, R, P]`) for a few
//! leading eigenpairs, and a dense route used when the wanted count is a
//! sizeable fraction of the dimension.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::GalerkinError;

/// Leading eigenpairs, ascending, with Euclidean-orthonormal columns.
#[derive(Clone, Debug)]
pub struct EigenPairs {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
    pub iterations: usize,
    /// Largest relative residual `|Ax − θx| / max(1, |θ|)` over the pairs.
    pub residual: f64,
}

/// A symmetric operator on `dim`-vectors, optionally restricted to an
/// invariant subspace through `constrain` (an orthogonal projector).
pub trait SymOp {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);
    fn constrain(&self, _x: &mut [f64]) {}
}

fn apply_block<O: SymOp + ?Sized>(op: &O, x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(x.nrows(), x.ncols());
    let mut y = vec![0.0; x.nrows()];
    for (k, col) in x.column_iter().enumerate() {
        let xs: Vec<f64> = col.iter().copied().collect();
        op.apply(&xs, &mut y);
        out.column_mut(k).copy_from_slice(&y);
    }
    constrain_block(op, &mut out);
    out
}

/// Constrains each column at unit scale, so that a constraint solved to an
/// absolute tolerance stays accurate for columns of any size.
fn constrain_block<O: SymOp + ?Sized>(op: &O, x: &mut DMatrix<f64>) {
    let mut buf = vec![0.0; x.nrows()];
    for mut col in x.column_iter_mut() {
        let scale = col.norm();
        if scale == 0.0 {
            continue;
        }
        buf.iter_mut().zip(col.iter()).for_each(|(b, c)| *b = c / scale);
        op.constrain(&mut buf);
        col.iter_mut().zip(&buf).for_each(|(c, b)| *c = b * scale);
    }
}

/// Modified Gram–Schmidt, applied twice, over the columns of `s` in order.
/// Columns whose norm collapses below `drop · original` are discarded, so the
/// result spans the same space with orthonormal columns.
fn orthonormalize(s: &DMatrix<f64>, drop: f64) -> DMatrix<f64> {
    let mut kept: Vec<DVector<f64>> = Vec::with_capacity(s.ncols());
    for col in s.column_iter() {
        let mut v = col.clone_owned();
        let n0 = v.norm();
        if n0 == 0.0 {
            continue;
        }
        for _ in 0..2 {
            for q in &kept {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let n1 = v.norm();
        if n1 > drop * n0 {
            kept.push(v / n1);
        }
    }
    DMatrix::from_columns(&kept)
}

/// Rayleigh–Ritz on the orthonormal basis `s`: ascending Ritz values and the
/// coefficient matrix of the Ritz vectors.
fn rayleigh_ritz(s: &DMatrix<f64>, as_: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let h = s.transpose() * as_;
    let h = 0.5 * (&h + h.transpose());
    sorted_eigen(h)
}

/// Ascending eigen-decomposition of a symmetric matrix.
pub fn sorted_eigen(h: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(h);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
    let cols: Vec<DVector<f64>> = order.iter().map(|&k| eig.eigenvectors.column(k).clone_owned()).collect();
    (values, DMatrix::from_columns(&cols))
}

/// Fixes the sign of each column so that its largest-magnitude entry (first
/// one on ties) is positive.
pub fn normalize_signs(v: &mut DMatrix<f64>) {
    for mut col in v.column_iter_mut() {
        let mut best = 0usize;
        for (k, x) in col.iter().enumerate() {
            if x.abs() > col[best].abs() * (1.0 + 1e-12) {
                best = k;
            }
        }
        if col[best] < 0.0 {
            col.neg_mut();
        }
    }
}

fn residuals(x: &DMatrix<f64>, ax: &DMatrix<f64>, theta: &[f64]) -> (DMatrix<f64>, Vec<f64>) {
    let mut r = ax.clone();
    let mut rel = Vec::with_capacity(theta.len());
    for (k, &t) in theta.iter().enumerate() {
        let mut c = r.column_mut(k);
        c.axpy(-t, &x.column(k), 1.0);
        rel.push(c.norm() / t.abs().max(1.0));
    }
    (r, rel)
}

/// Block locally optimal iteration for the `n` smallest eigenpairs, using a
/// block of `n + guard` vectors started from a seeded random block.
pub fn lobpcg<O: SymOp + ?Sized>(op: &O, n: usize, tol: f64, max_iter: usize, seed: u64) -> Result<EigenPairs, GalerkinError> {
    let dim = op.dim();
    let m = (n + (n / 4).max(2)).min(dim);
    if n == 0 || n > dim {
        return Err(GalerkinError::Dimension {
            requested: n,
            available: dim,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = DMatrix::from_fn(dim, m, |_, _| rng.random_range(-1.0..1.0));
    constrain_block(op, &mut x);
    x = orthonormalize(&x, 1e-8);
    let ax = apply_block(op, &x);
    let (theta, c) = rayleigh_ritz(&x, &ax);
    let mut x = &x * &c;
    let mut ax = ax * &c;
    let mut theta = theta;
    let mut p: Option<DMatrix<f64>> = None;
    let mut worst = f64::INFINITY;
    for it in 0..max_iter {
        let (r, rel) = residuals(&x, &ax, &theta);
        worst = rel[..n].iter().copied().fold(0.0, f64::max);
        if worst <= tol {
            let mut vectors = x.columns(0, n).clone_owned();
            normalize_signs(&mut vectors);
            return Ok(EigenPairs {
                values: theta[..n].to_vec(),
                vectors,
                iterations: it,
                residual: worst,
            });
        }
        // converged residuals are roundoff and only pollute the search space
        let active: Vec<usize> = (0..r.ncols()).filter(|&k| rel[k] > 0.1 * tol).collect();
        let mut r = r.select_columns(&active);
        constrain_block(op, &mut r);
        let mut blocks = vec![x.clone(), r];
        if let Some(pp) = &p {
            blocks.push(pp.clone());
        }
        let cols: Vec<DVector<f64>> = blocks.iter().flat_map(|b| b.column_iter().map(|c| c.clone_owned())).collect();
        let mut s = orthonormalize(&DMatrix::from_columns(&cols), 1e-10);
        // orthogonalisation amplifies constraint errors of nearly dependent
        // columns, so the basis is constrained and orthonormalised once more
        constrain_block(op, &mut s);
        let s = orthonormalize(&s, 1e-10);
        let as_ = apply_block(op, &s);
        let (vals, coef) = rayleigh_ritz(&s, &as_);
        let take = m.min(s.ncols());
        let cm = coef.columns(0, take).clone_owned();
        let xn = &s * &cm;
        // the search direction is the part of the update outside span(X)
        let coupling = x.transpose() * &xn;
        p = Some(&xn - &x * coupling);
        ax = &as_ * &cm;
        x = xn;
        theta = vals[..take].to_vec();
    }
    Err(GalerkinError::NotConverged {
        what: "block eigensolver",
        residual: worst,
        iterations: max_iter,
    })
}

/// Assembles the operator densely (column by column) compressed to the
/// orthonormal basis `q` of a subspace, or on the whole space when `q` is
/// `None`, and returns the `n` smallest eigenpairs of the compression.
pub fn dense<O: SymOp + ?Sized>(op: &O, n: usize, q: Option<&DMatrix<f64>>) -> Result<EigenPairs, GalerkinError> {
    let dim = op.dim();
    let basis = match q {
        Some(q) => q.clone(),
        None => DMatrix::identity(dim, dim),
    };
    if n == 0 || n > basis.ncols() {
        return Err(GalerkinError::Dimension {
            requested: n,
            available: basis.ncols(),
        });
    }
    let aq = apply_block(op, &basis);
    let h = basis.transpose() * &aq;
    let h = 0.5 * (&h + h.transpose());
    let (values, v) = sorted_eigen(h);
    let mut vectors = &basis * v.columns(0, n);
    normalize_signs(&mut vectors);
    let mut ax = apply_block(op, &vectors);
    if let Some(q) = q {
        ax = q * (q.transpose() * ax);
    }
    let (_, rel) = residuals(&vectors, &ax, &values[..n]);
    Ok(EigenPairs {
        values: values[..n].to_vec(),
        vectors,
        iterations: 1,
        residual: rel.iter().copied().fold(0.0, f64::max),
    })
}
