//! Dense linear algebra used by the models and the eigenvalue oracles.
//!
//! Storage and LU factorisation come from `nalgebra`; the cyclic Jacobi
//! solver is written out here because it serves as an independent oracle
//! for the closed-form path and cycle spectra.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LinalgError {
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("matrix is not symmetric (max asymmetry {max_asymmetry:e})")]
    NotSymmetric { max_asymmetry: f64 },
    #[error("system is singular (smallest pivot {pivot:e})")]
    Singular { pivot: f64 },
    #[error("Jacobi sweeps did not converge after {sweeps} sweeps (off-diagonal mass {off:e})")]
    NoConvergence { sweeps: usize, off: f64 },
}

/// Diagonal of `U` from an LU factorisation with partial (row) pivoting.
pub fn lu_pivots(a: &Matrix) -> Result<Vec<f64>, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let lu = a.clone().lu();
    Ok(lu.u().diagonal().iter().copied().collect())
}

/// Solves `a x = b` by LU with partial pivoting.
///
/// A pivot whose magnitude falls below `pivot_tol` (relative to the largest
/// entry of `a`) is reported as [`LinalgError::Singular`].
pub fn solve(a: &Matrix, b: &Vector, pivot_tol: f64) -> Result<Vector, LinalgError> {
    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    let lu = a.clone().lu();
    let smallest = lu
        .u()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |acc, p| acc.min(p.abs()));
    if !(smallest > pivot_tol * scale) {
        return Err(LinalgError::Singular { pivot: smallest });
    }
    lu.solve(b).ok_or(LinalgError::Singular { pivot: smallest })
}

/// Largest `|a_ij - a_ji|`.
pub fn max_asymmetry(a: &Matrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Eigenvalues of a symmetric matrix by row-cyclic Jacobi rotations.
///
/// Sweeps continue until the off-diagonal Frobenius norm drops to
/// `off_tol`. The result is sorted in descending order.
pub fn jacobi_eigenvalues(
    a: &Matrix,
    symmetry_tol: f64,
    off_tol: f64,
) -> Result<Vec<f64>, LinalgError> {
    const MAX_SWEEPS: usize = 100;

    if !a.is_square() {
        return Err(LinalgError::NotSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    let asym = max_asymmetry(a);
    if asym > symmetry_tol {
        return Err(LinalgError::NotSymmetric {
            max_asymmetry: asym,
        });
    }

    let n = a.nrows();
    // work on a plain column-major buffer, symmetrised so that rounding-level
    // asymmetry does not leak into the rotations
    let sym = (a + a.transpose()) * 0.5;
    let mut m: Vec<f64> = sym.as_slice().to_vec();
    let at = |i: usize, j: usize| j * n + i;
    let off = |m: &[f64]| {
        let mut sum = 0.0;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    sum += m[j * n + i] * m[j * n + i];
                }
            }
        }
        sum.sqrt()
    };
    let mut sweeps = 0;
    while off(&m) > off_tol {
        if sweeps == MAX_SWEEPS {
            return Err(LinalgError::NoConvergence {
                sweeps,
                off: off(&m),
            });
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[at(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = m[at(p, p)];
                let aqq = m[at(q, q)];
                // tan of the rotation angle, smaller root for stability
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                // columns p and q are contiguous
                for k in 0..n {
                    let akp = m[p * n + k];
                    let akq = m[q * n + k];
                    m[p * n + k] = c * akp - s * akq;
                    m[q * n + k] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = m[k * n + p];
                    let aqk = m[k * n + q];
                    m[k * n + p] = c * apk - s * aqk;
                    m[k * n + q] = s * apk + c * aqk;
                }
                m[at(p, q)] = 0.0;
                m[at(q, p)] = 0.0;
            }
        }
        sweeps += 1;
    }

    let mut eig: Vec<f64> = (0..n).map(|i| m[at(i, i)]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    Ok(eig)
}
