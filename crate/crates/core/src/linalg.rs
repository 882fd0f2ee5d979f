//! Small dense linear algebra used across the crate.
//!
//! Matrices here are at most ~12x12, so the symmetric eigensolver is a plain
//! cyclic Jacobi sweep which is slow but accurate to a few ulps in both the
//! eigenvalues and the orthogonality of the eigenvectors.

use nalgebra::{DMatrix, DVector};

use crate::error::{FocalError, Result};

/// Off-diagonal Frobenius norm below which a Jacobi sweep is considered converged
/// (relative to `max(1, ||A||_F)`).
pub const JACOBI_OFFDIAG_TOL: f64 = 1e-13;

const JACOBI_MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a real symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Vec<f64>,
    /// Columns are the unit eigenvectors, in the order of `values`.
    pub vectors: DMatrix<f64>,
    pub sweeps: usize,
}

impl SymmetricEigen {
    pub fn vector(&self, k: usize) -> DVector<f64> {
        self.vectors.column(k).into_owned()
    }
}

fn off_diagonal_norm(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[(i, j)] * a[(i, j)];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi eigensolver for a symmetric matrix.
///
/// The input is symmetrized (`(A + A^T)/2`) before the sweeps start.
pub fn jacobi_eigen(input: &DMatrix<f64>) -> Result<SymmetricEigen> {
    let n = input.nrows();
    if n != input.ncols() {
        return Err(FocalError::invalid("jacobi_eigen needs a square matrix"));
    }
    let mut a = (input + input.transpose()) * 0.5;
    let mut v = DMatrix::<f64>::identity(n, n);
    let scale = a.norm().max(1.0);
    let tol = JACOBI_OFFDIAG_TOL * scale;

    let mut sweeps = 0;
    while off_diagonal_norm(&a) > tol {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(FocalError::NumericalFailure(format!(
                "Jacobi did not converge after {JACOBI_MAX_SWEEPS} sweeps (off-diagonal {:.3e})",
                off_diagonal_norm(&a)
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(i, i)].total_cmp(&a[(j, j)]));
    let values = order.iter().map(|&i| a[(i, i)]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| v[(r, order[c])]);
    Ok(SymmetricEigen {
        values,
        vectors,
        sweeps,
    })
}

/// Elementary symmetric polynomials `e_1 .. e_m` of `values`.
pub fn elementary_symmetric(values: &[f64]) -> Vec<f64> {
    let m = values.len();
    // e[k] holds e_k of the values consumed so far, e[0] = 1.
    let mut e = vec![0.0; m + 1];
    e[0] = 1.0;
    for (i, &v) in values.iter().enumerate() {
        for k in (1..=i + 1).rev() {
            e[k] += v * e[k - 1];
        }
    }
    e[1..].to_vec()
}

/// Modified Gram-Schmidt. Candidates whose residual norm falls below `drop_tol`
/// are skipped, so the result may hold fewer vectors than the input.
pub fn gram_schmidt(
    against: &[DVector<f64>],
    candidates: impl IntoIterator<Item = DVector<f64>>,
    drop_tol: f64,
) -> Vec<DVector<f64>> {
    let mut basis: Vec<DVector<f64>> = against.to_vec();
    let fixed = basis.len();
    for mut c in candidates {
        for _ in 0..2 {
            for b in &basis {
                let d = c.dot(b);
                c.axpy(-d, b, 1.0);
            }
        }
        let norm = c.norm();
        if norm > drop_tol {
            basis.push(c / norm);
        }
    }
    basis.split_off(fixed)
}

pub fn commutator(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    a * b - b * a
}

/// Orthonormal basis of the null space of `m` (rows are constraints).
pub fn null_space(m: &DMatrix<f64>, rank_tol: f64) -> Vec<DVector<f64>> {
    let cols = m.ncols();
    let rows: Vec<DVector<f64>> = (0..m.nrows())
        .map(|r| m.row(r).transpose().into_owned())
        .collect();
    let row_basis = gram_schmidt(&[], rows, rank_tol);
    let unit = (0..cols).map(|k| {
        let mut e = DVector::zeros(cols);
        e[k] = 1.0;
        e
    });
    let mut full = row_basis.clone();
    full.extend(gram_schmidt(&row_basis, unit, 1e-8));
    full.split_off(row_basis.len())
}

/// Sorted copy of a slice.
pub fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}
