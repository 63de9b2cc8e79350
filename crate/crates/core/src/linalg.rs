//! Matrix-free preconditioned conjugate gradients.

use crate::error::{Error, Result};
use crate::grid::field::{axpy, dot};

/// Norm used by the stopping test.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ResidualNorm {
    /// Euclidean norm of the residual vector.
    L2,
    /// Largest absolute residual entry.
    Max,
}

#[derive(Clone, Copy, Debug)]
pub struct CgOptions {
    /// Stop once `|r| ≤ rel_tol · |b|`.
    pub rel_tol: f64,
    /// Or once `|r| ≤ abs_tol`.
    pub abs_tol: f64,
    pub max_iter: usize,
    pub norm: ResidualNorm,
    /// Keep iterates in the mean-zero subspace (singular Neumann systems).
    pub remove_mean: bool,
}

impl CgOptions {
    pub fn relative(rel_tol: f64, max_iter: usize) -> Self {
        CgOptions {
            rel_tol,
            abs_tol: 0.0,
            max_iter,
            norm: ResidualNorm::L2,
            remove_mean: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CgOutcome {
    pub iterations: usize,
    /// Final true residual in the configured norm.
    pub residual: f64,
}

fn norm_of(v: &[f64], norm: ResidualNorm) -> f64 {
    match norm {
        ResidualNorm::L2 => dot(v, v).sqrt(),
        ResidualNorm::Max => v.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

fn subtract_mean(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|x| *x -= m);
}

/// Solves `A x = b` for symmetric positive (semi-)definite `A`, starting
/// from the content of `x`. `precond` holds the inverse diagonal for Jacobi
/// preconditioning; `None` runs plain CG.
///
/// The recursive residual is checked against the true residual before
/// returning; a mismatch restarts the iteration from the true residual.
pub fn pcg(
    what: &str,
    mut apply: impl FnMut(&[f64], &mut [f64]),
    precond: Option<&[f64]>,
    b: &[f64],
    x: &mut [f64],
    opts: &CgOptions,
) -> Result<CgOutcome> {
    let n = b.len();
    let mut bb = b.to_vec();
    if opts.remove_mean {
        subtract_mean(&mut bb);
    }
    let target = (opts.rel_tol * norm_of(&bb, opts.norm)).max(opts.abs_tol);
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut iterations = 0;

    let true_residual = |apply: &mut dyn FnMut(&[f64], &mut [f64]), x: &[f64], r: &mut [f64]| {
        apply(x, r);
        for (ri, bi) in r.iter_mut().zip(&bb) {
            *ri = bi - *ri;
        }
        if opts.remove_mean {
            subtract_mean(r);
        }
    };

    loop {
        true_residual(&mut apply, x, &mut r);
        let res = norm_of(&r, opts.norm);
        if res <= target || !res.is_finite() {
            if !res.is_finite() {
                return Err(Error::SolverDiverged {
                    what: what.to_string(),
                    residual: res,
                    iterations,
                });
            }
            return Ok(CgOutcome {
                iterations,
                residual: res,
            });
        }
        if iterations >= opts.max_iter {
            return Err(Error::SolverDiverged {
                what: what.to_string(),
                residual: res,
                iterations,
            });
        }

        let precondition = |r: &[f64], z: &mut [f64]| {
            match precond {
                Some(d) => z.iter_mut().zip(r.iter().zip(d)).for_each(|(z, (r, d))| *z = r * d),
                None => z.copy_from_slice(r),
            }
            if opts.remove_mean {
                subtract_mean(z);
            }
        };
        precondition(&r, &mut z);
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        let mut stalled = 0;
        while iterations < opts.max_iter {
            apply(&p, &mut q);
            let pq = dot(&p, &q);
            if pq <= 0.0 || !pq.is_finite() {
                if stalled == 0 {
                    // no progress possible: the operator is not positive definite
                    return Err(Error::SolverDiverged {
                        what: what.to_string(),
                        residual: norm_of(&r, opts.norm),
                        iterations,
                    });
                }
                break;
            }
            let alpha = rz / pq;
            axpy(x, alpha, &p);
            axpy(&mut r, -alpha, &q);
            if opts.remove_mean {
                subtract_mean(&mut r);
            }
            iterations += 1;
            if norm_of(&r, opts.norm) <= target {
                break;
            }
            precondition(&r, &mut z);
            let rz_new = dot(&r, &z);
            if rz_new == 0.0 {
                break;
            }
            let beta = rz_new / rz;
            rz = rz_new;
            p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
            stalled += 1;
            // periodic restart guards against loss of conjugacy
            if stalled > 4 * n.max(50) {
                break;
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tridiag(x: &[f64], y: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let l = if i > 0 { x[i - 1] } else { 0.0 };
            let r = if i + 1 < n { x[i + 1] } else { 0.0 };
            y[i] = 4.0 * x[i] - l - r;
        }
    }

    #[test]
    fn solves_spd_system() {
        let n = 50;
        let exact: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        tridiag(&exact, &mut b);
        let mut x = vec![0.0; n];
        let out = pcg("test", tridiag, None, &b, &mut x, &CgOptions::relative(1e-13, 500)).unwrap();
        assert!(out.iterations > 0);
        for (a, e) in x.iter().zip(&exact) {
            assert!((a - e).abs() < 1e-11);
        }
        let diag = vec![0.25; n];
        let mut x = vec![0.0; n];
        pcg("test", tridiag, Some(&diag), &b, &mut x, &CgOptions::relative(1e-13, 500)).unwrap();
        for (a, e) in x.iter().zip(&exact) {
            assert!((a - e).abs() < 1e-11);
        }
    }

    #[test]
    fn reports_non_convergence() {
        let b = vec![1.0; 20];
        let mut x = vec![0.0; 20];
        let err = pcg("probe", tridiag, None, &b, &mut x, &CgOptions::relative(1e-14, 2)).unwrap_err();
        match err {
            Error::SolverDiverged { what, iterations, residual } => {
                assert_eq!(what, "probe");
                assert_eq!(iterations, 2);
                assert!(residual > 0.0);
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn zero_rhs_returns_immediately() {
        let b = vec![0.0; 10];
        let mut x = vec![0.0; 10];
        let out = pcg("z", tridiag, None, &b, &mut x, &CgOptions::relative(1e-10, 10)).unwrap();
        assert_eq!(out.iterations, 0);
    }
}
