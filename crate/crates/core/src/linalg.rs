//! Small dense linear algebra: cyclic Jacobi eigendecomposition for symmetric
//! matrices and Gauss-Jordan inversion. Matrices here are at most a few dozen
//! rows, so O(n³) per sweep is irrelevant.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Error, Result};

const MAX_SWEEPS: usize = 100;

/// Eigenpairs of a real symmetric matrix, eigenvalues ascending, eigenvectors
/// stored as the columns of `vectors`.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
}

impl SymmetricEigen {
    /// Reassembles `V diag(f(λ)) Vᵀ`.
    pub fn reconstruct(&self, f: impl Fn(f64) -> f64) -> Array2<f64> {
        let n = self.values.len();
        let mut out = Array2::<f64>::zeros((n, n));
        for (k, &lambda) in self.values.iter().enumerate() {
            let s = f(lambda);
            if s == 0.0 {
                continue;
            }
            let v = self.vectors.column(k);
            for i in 0..n {
                let vi = s * v[i];
                for j in 0..n {
                    out[[i, j]] += vi * v[j];
                }
            }
        }
        out
    }
}

fn off_diagonal_norm(a: &Array2<f64>) -> f64 {
    let n = a.nrows();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                s += a[[i, j]] * a[[i, j]];
            }
        }
    }
    s.sqrt()
}

/// Cyclic Jacobi rotations until the off-diagonal Frobenius norm falls below
/// `1e-14 · ‖A‖_F` (or is exactly zero).
pub fn symmetric_eigen(matrix: ArrayView2<f64>) -> Result<SymmetricEigen> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::InvalidDimension(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            n,
            matrix.ncols()
        )));
    }
    if matrix.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("non-finite entry in matrix".into()));
    }
    let mut a = matrix.to_owned();
    let mut v = Array2::<f64>::eye(n);
    let scale = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let tol = 1e-14 * scale.max(f64::MIN_POSITIVE);

    let mut converged = n < 2;
    for _ in 0..MAX_SWEEPS {
        if off_diagonal_norm(&a) <= tol {
            converged = true;
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[[p, q]];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;

                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                a[[p, q]] = 0.0;
                a[[q, p]] = 0.0;
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged && off_diagonal_norm(&a) > tol {
        return Err(Error::NumericalFailure(format!(
            "Jacobi eigendecomposition did not converge in {MAX_SWEEPS} sweeps"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[[i, i]].total_cmp(&a[[j, j]]));
    let values = Array1::from_iter(order.iter().map(|&i| a[[i, i]]));
    let mut vectors = Array2::<f64>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    Ok(SymmetricEigen { values, vectors })
}

/// Inverse by Gauss-Jordan elimination with partial pivoting.
pub fn invert(matrix: ArrayView2<f64>) -> Result<Array2<f64>> {
    let n = matrix.nrows();
    if n != matrix.ncols() {
        return Err(Error::InvalidDimension(format!(
            "inverse needs a square matrix, got {}x{}",
            n,
            matrix.ncols()
        )));
    }
    let mut a = matrix.to_owned();
    let mut inv = Array2::<f64>::eye(n);
    let scale = a.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[[i, col]].abs().total_cmp(&a[[j, col]].abs()))
            .unwrap_or(col);
        if a[[pivot, col]].abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::NumericalFailure("matrix is singular".into()));
        }
        if pivot != col {
            for k in 0..n {
                a.swap([pivot, k], [col, k]);
                inv.swap([pivot, k], [col, k]);
            }
        }
        let d = a[[col, col]];
        for k in 0..n {
            a[[col, k]] /= d;
            inv[[col, k]] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = a[[r, col]];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                a[[r, k]] -= f * a[[col, k]];
                inv[[r, k]] -= f * inv[[col, k]];
            }
        }
    }
    Ok(inv)
}

/// `vᵀ M v` without allocating.
pub fn quadratic(matrix: ArrayView2<f64>, v: ArrayView1<f64>) -> f64 {
    let n = v.len();
    let mut total = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += matrix[[i, j]] * v[j];
        }
        total += v[i] * row;
    }
    total
}

pub fn max_abs_diff(a: ArrayView2<f64>, b: ArrayView2<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eigen_of_diagonal_is_sorted() {
        let m = array![[3.0, 0.0, 0.0], [0.0, -1.0, 0.0], [0.0, 0.0, 2.0]];
        let e = symmetric_eigen(m.view()).unwrap();
        assert_eq!(e.values.to_vec(), vec![-1.0, 2.0, 3.0]);
    }

    #[test]
    fn eigen_reconstructs_input() {
        let m = array![
            [4.0, 1.0, -2.0, 0.5],
            [1.0, 2.0, 0.0, 1.0],
            [-2.0, 0.0, 3.0, -1.5],
            [0.5, 1.0, -1.5, 1.0]
        ];
        let e = symmetric_eigen(m.view()).unwrap();
        let back = e.reconstruct(|x| x);
        assert!(max_abs_diff(back.view(), m.view()) < 1e-12);
        let vtv = e.vectors.t().dot(&e.vectors);
        assert!(max_abs_diff(vtv.view(), Array2::eye(4).view()) < 1e-12);
    }

    #[test]
    fn two_by_two_closed_form() {
        // eigenvalues of [[2,1],[1,2]] are 1 and 3
        let e = symmetric_eigen(array![[2.0, 1.0], [1.0, 2.0]].view()).unwrap();
        assert!((e.values[0] - 1.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn invert_roundtrip_and_singular() {
        let m = array![[0.0, 2.0, 1.0], [1.0, 1.0, 0.0], [3.0, 0.0, 1.0]];
        let inv = invert(m.view()).unwrap();
        let id = m.dot(&inv);
        assert!(max_abs_diff(id.view(), Array2::eye(3).view()) < 1e-12);

        let s = array![[1.0, 2.0], [2.0, 4.0]];
        assert!(matches!(invert(s.view()), Err(Error::NumericalFailure(_))));
    }

    #[test]
    fn non_finite_input_is_rejected() {
        let m = array![[f64::NAN, 0.0], [0.0, 1.0]];
        assert!(symmetric_eigen(m.view()).is_err());
    }
}
