//! Dense symmetric linear algebra: cyclic-Jacobi eigendecomposition, Cholesky
//! factorization, and triangular solves. All routines are generic over
//! [`Scalar`] and deterministic.

use ndarray::{Array2, ArrayView2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

const MAX_JACOBI_SWEEPS: usize = 100;

/// Eigendecomposition of a symmetric matrix: `values` descending,
/// `vectors` holding the matching eigenvectors as columns.
#[derive(Debug, Clone)]
pub struct SymEigen<T> {
    pub values: Vec<T>,
    pub vectors: Array2<T>,
}

/// Largest absolute asymmetry `max |a_ij - a_ji|`.
pub fn max_asymmetry<T: Scalar>(a: &ArrayView2<'_, T>) -> T {
    let n = a.nrows();
    let mut worst = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[[i, j]] - a[[j, i]]).abs());
        }
    }
    worst
}

fn ensure_symmetric<T: Scalar>(a: &ArrayView2<'_, T>, context: &'static str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::ShapeMismatch(format!(
            "{context}: matrix must be square, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    if a.is_empty() {
        return Err(Error::EmptyInput(context));
    }
    let scale = a.iter().fold(T::zero(), |m, v| m.max(v.abs()));
    let tol = T::from_f64(1e-8) * scale.max(T::one());
    let delta = max_asymmetry(a);
    if delta > tol {
        return Err(Error::NotSymmetric {
            max_delta: delta.to_f64_lossy(),
        });
    }
    Ok(())
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Converges when the off-diagonal Frobenius mass falls below machine
/// precision relative to the matrix norm; errors if the input is not
/// symmetric or the sweep limit is exhausted.
pub fn sym_eigen<T: Scalar>(a: &ArrayView2<'_, T>) -> Result<SymEigen<T>> {
    ensure_symmetric(a, "sym_eigen")?;
    let n = a.nrows();
    // Work on the symmetrized copy so the iteration sees an exactly symmetric
    // matrix regardless of roundoff in the input.
    let mut m = Array2::<T>::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            m[[i, j]] = (a[[i, j]] + a[[j, i]]) * T::from_f64(0.5);
        }
    }
    let mut v = Array2::<T>::eye(n);
    let norm = m.iter().map(|x| *x * *x).sum::<T>().sqrt();
    if norm == T::zero() {
        return Ok(finish_eigen(m, v));
    }
    let stop = T::epsilon() * norm * T::from_usize(n);
    for _ in 0..MAX_JACOBI_SWEEPS {
        let off = off_diag_norm(&m);
        if off <= stop {
            return Ok(finish_eigen(m, v));
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[[p, q]];
                if apq.abs() <= T::epsilon() * norm {
                    continue;
                }
                let tau = (m[[q, q]] - m[[p, p]]) / (T::from_f64(2.0) * apq);
                let t = {
                    let root = (T::one() + tau * tau).sqrt();
                    if tau >= T::zero() {
                        T::one() / (tau + root)
                    } else {
                        -T::one() / (-tau + root)
                    }
                };
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                rotate(&mut m, &mut v, p, q, c, s);
            }
        }
    }
    Err(Error::EigenFailure)
}

fn off_diag_norm<T: Scalar>(m: &Array2<T>) -> T {
    let n = m.nrows();
    let mut sum = T::zero();
    for i in 0..n {
        for j in (i + 1)..n {
            sum += m[[i, j]] * m[[i, j]];
        }
    }
    (sum + sum).sqrt()
}

fn rotate<T: Scalar>(m: &mut Array2<T>, v: &mut Array2<T>, p: usize, q: usize, c: T, s: T) {
    let n = m.nrows();
    // Columns p, q of M.
    for k in 0..n {
        let mkp = m[[k, p]];
        let mkq = m[[k, q]];
        m[[k, p]] = c * mkp - s * mkq;
        m[[k, q]] = s * mkp + c * mkq;
    }
    // Rows p, q of M.
    for k in 0..n {
        let mpk = m[[p, k]];
        let mqk = m[[q, k]];
        m[[p, k]] = c * mpk - s * mqk;
        m[[q, k]] = s * mpk + c * mqk;
    }
    // Accumulate V <- V J.
    for k in 0..n {
        let vkp = v[[k, p]];
        let vkq = v[[k, q]];
        v[[k, p]] = c * vkp - s * vkq;
        v[[k, q]] = s * vkp + c * vkq;
    }
}

fn finish_eigen<T: Scalar>(m: Array2<T>, v: Array2<T>) -> SymEigen<T> {
    let n = m.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let diag: Vec<T> = (0..n).map(|i| m[[i, i]]).collect();
    order.sort_by(|&i, &j| diag[j].partial_cmp(&diag[i]).expect("finite eigenvalues"));
    let values: Vec<T> = order.iter().map(|&i| diag[i]).collect();
    let mut vectors = Array2::<T>::zeros((n, n));
    for (dst, &src) in order.iter().enumerate() {
        vectors.column_mut(dst).assign(&v.column(src));
    }
    SymEigen { values, vectors }
}

impl<T: Scalar> SymEigen<T> {
    /// `V diag(f(lambda)) V^T`.
    pub fn reassemble(&self, f: impl Fn(T) -> T) -> Array2<T> {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, lam) in self.values.iter().enumerate() {
            let fv = f(*lam);
            scaled.column_mut(j).mapv_inplace(|x| x * fv);
        }
        let mut out = scaled.dot(&self.vectors.t());
        // Re-symmetrize to wash out roundoff from the two GEMMs.
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = (out[[i, j]] + out[[j, i]]) * T::from_f64(0.5);
                out[[i, j]] = avg;
                out[[j, i]] = avg;
            }
        }
        out
    }

    /// Ratio of the largest to the smallest absolute eigenvalue.
    pub fn condition_estimate(&self) -> f64 {
        let max = self
            .values
            .iter()
            .fold(0.0f64, |m, v| m.max(v.to_f64_lossy().abs()));
        let min = self
            .values
            .iter()
            .fold(f64::INFINITY, |m, v| m.min(v.to_f64_lossy().abs()));
        if min == 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }
}

/// Lower-triangular Cholesky factor `L` with `L L^T = A`.
pub fn cholesky<T: Scalar>(a: &ArrayView2<'_, T>) -> Result<Array2<T>> {
    ensure_symmetric(a, "cholesky")?;
    let n = a.nrows();
    let mut l = Array2::<T>::zeros((n, n));
    for j in 0..n {
        let (head, tail) = l.view_mut().split_at(Axis(0), j + 1);
        let row_j = head.row(j);
        let mut diag = a[[j, j]];
        for k in 0..j {
            diag -= row_j[k] * row_j[k];
        }
        if diag <= T::zero() || !diag.is_finite() {
            return Err(Error::NotPositiveDefinite { pivot: j });
        }
        let ljj = diag.sqrt();
        drop(tail);
        l[[j, j]] = ljj;
        for i in j + 1..n {
            let mut sum = a[[i, j]];
            for k in 0..j {
                sum -= l[[i, k]] * l[[j, k]];
            }
            l[[i, j]] = sum / ljj;
        }
    }
    Ok(l)
}

/// Solves `L L^T X = B` for `X` given the lower Cholesky factor.
pub fn cholesky_solve<T: Scalar>(l: &ArrayView2<'_, T>, b: &ArrayView2<'_, T>) -> Result<Array2<T>> {
    let n = l.nrows();
    if b.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "cholesky_solve right-hand side rows",
            expected: n,
            got: b.nrows(),
        });
    }
    let m = b.ncols();
    let mut x = b.to_owned();
    // Forward: L Y = B.
    for i in 0..n {
        for k in 0..i {
            let lik = l[[i, k]];
            if lik != T::zero() {
                for c in 0..m {
                    let v = x[[k, c]];
                    x[[i, c]] -= lik * v;
                }
            }
        }
        let lii = l[[i, i]];
        for c in 0..m {
            x[[i, c]] /= lii;
        }
    }
    // Backward: L^T X = Y.
    for i in (0..n).rev() {
        for k in i + 1..n {
            let lki = l[[k, i]];
            if lki != T::zero() {
                for c in 0..m {
                    let v = x[[k, c]];
                    x[[i, c]] -= lki * v;
                }
            }
        }
        let lii = l[[i, i]];
        for c in 0..m {
            x[[i, c]] /= lii;
        }
    }
    Ok(x)
}

/// Dot product of two matrices viewed as flat vectors.
pub fn frobenius_inner<T: Scalar>(a: &ArrayView2<'_, T>, b: &ArrayView2<'_, T>) -> T {
    a.iter().zip(b.iter()).map(|(x, y)| *x * *y).sum()
}

pub fn frobenius_norm<T: Scalar>(a: &ArrayView2<'_, T>) -> T {
    frobenius_inner(a, a).sqrt()
}

/// Mean of all entries.
pub fn matrix_mean<T: Scalar>(a: &ArrayView2<'_, T>) -> T {
    a.iter().copied().sum::<T>() / T::from_usize(a.len())
}

/// Solves the 1-d least squares `min_c || a - c b ||_F`, returning `c`.
/// `None` when `b` is identically zero.
pub fn best_scale<T: Scalar>(a: &ArrayView2<'_, T>, b: &ArrayView2<'_, T>) -> Option<T> {
    let bb = frobenius_inner(b, b);
    if bb == T::zero() {
        None
    } else {
        Some(frobenius_inner(a, b) / bb)
    }
}

#[allow(dead_code)]
#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::Scalar;
    use crate::seeds::rng_for;
    use ndarray::arr2;

    fn random_symmetric(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = rng_for(seed, "linalg-test");
        let raw = Array2::from_shape_fn((n, n), |_| f64::standard_normal(&mut rng));
        (&raw + &raw.t()) * 0.5
    }

    #[test]
    fn eigen_of_diagonal_matrix_sorts_descending() {
        let a: Array2<f64> = arr2(&[[1.0, 0.0, 0.0], [0.0, 5.0, 0.0], [0.0, 0.0, 3.0]]);
        let e = sym_eigen(&a.view()).unwrap();
        assert_eq!(e.values, vec![5.0, 3.0, 1.0]);
        // Eigenvector of the top value points along axis 1.
        assert!((e.vectors[[1, 0]].abs() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn eigen_of_known_two_by_two() {
        let a: Array2<f64> = arr2(&[[2.0, 1.0], [1.0, 2.0]]);
        let e = sym_eigen(&a.view()).unwrap();
        assert!((e.values[0] - 3.0).abs() < 1e-12);
        assert!((e.values[1] - 1.0).abs() < 1e-12);
        let inv_sqrt2 = 1.0 / 2.0f64.sqrt();
        assert!((e.vectors[[0, 0]].abs() - inv_sqrt2).abs() < 1e-12);
        assert!((e.vectors[[1, 0]].abs() - inv_sqrt2).abs() < 1e-12);
    }

    #[test]
    fn eigen_reconstructs_random_symmetric() {
        let a = random_symmetric(12, 9);
        let e = sym_eigen(&a.view()).unwrap();
        let back = e.reassemble(|l| l);
        let err = (&back - &a).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-10, "reconstruction error {err}");
        let gram = e.vectors.t().dot(&e.vectors);
        let eye_err = (&gram - &Array2::<f64>::eye(12))
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(eye_err < 1e-10, "orthogonality error {eye_err}");
    }

    #[test]
    fn eigen_handles_near_degenerate_spectrum() {
        let mut a = random_symmetric(8, 17);
        a *= 1e-13;
        a += &Array2::<f64>::eye(8);
        let e = sym_eigen(&a.view()).unwrap();
        for v in &e.values {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let back = e.reassemble(|l| l);
        let err = (&back - &a).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-12);
    }

    #[test]
    fn eigen_rejects_asymmetric_input() {
        let a: Array2<f64> = arr2(&[[1.0, 2.0], [0.0, 1.0]]);
        assert!(matches!(
            sym_eigen(&a.view()),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn eigen_works_in_f32() {
        let a64 = random_symmetric(6, 3);
        let a32 = a64.mapv(|v| v as f32);
        let e = sym_eigen(&a32.view()).unwrap();
        let back = e.reassemble(|l| l);
        let err = (&back - &a32).iter().fold(0.0f32, |m, v| m.max(v.abs()));
        assert!(err < 1e-4, "f32 reconstruction error {err}");
    }

    #[test]
    fn cholesky_recovers_known_factor() {
        let l: Array2<f64> = arr2(&[[2.0, 0.0, 0.0], [1.0, 3.0, 0.0], [0.5, 0.2, 1.5]]);
        let a = l.dot(&l.t());
        let got = cholesky(&a.view()).unwrap();
        let err = (&got - &l).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-12, "factor error {err}");
    }

    #[test]
    fn cholesky_rejects_indefinite_matrix() {
        let a: Array2<f64> = arr2(&[[1.0, 2.0], [2.0, 1.0]]);
        assert!(matches!(
            cholesky(&a.view()),
            Err(Error::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn cholesky_solve_matches_direct_solution() {
        let mut rng = rng_for(4, "chol-solve");
        let raw = Array2::from_shape_fn((10, 10), |_| f64::standard_normal(&mut rng));
        let a = raw.dot(&raw.t()) + Array2::<f64>::eye(10) * 0.5;
        let x_true = Array2::from_shape_fn((10, 3), |_| f64::standard_normal(&mut rng));
        let b = a.dot(&x_true);
        let l = cholesky(&a.view()).unwrap();
        let x = cholesky_solve(&l.view(), &b.view()).unwrap();
        let err = (&x - &x_true).iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(err < 1e-9, "solve error {err}");
    }

    #[test]
    fn best_scale_recovers_multiplier() {
        let b = random_symmetric(5, 21);
        let a = &b * 3.25;
        let c = best_scale(&a.view(), &b.view()).unwrap();
        assert!((c - 3.25).abs() < 1e-12);
        let zero = Array2::<f64>::zeros((5, 5));
        assert!(best_scale(&a.view(), &zero.view()).is_none());
    }
}
