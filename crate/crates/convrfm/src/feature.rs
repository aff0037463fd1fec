//! Symmetric patch feature matrices.

use ndarray::{Array2, ArrayView2};

use crate::error::{Error, Result};
use crate::linalg::{max_asymmetry, sym_eigen};
use crate::scalar::Scalar;

/// Symmetric `d x d` matrix over flattened patch coordinates (`d = c q^2`).
/// Stored exactly symmetric; construction validates and averages away
/// roundoff-level asymmetry.
#[derive(Debug, Clone)]
pub struct FeatureMatrix<T> {
    entries: Array2<T>,
}

impl<T: Scalar> FeatureMatrix<T> {
    pub fn new(entries: Array2<T>) -> Result<Self> {
        if entries.nrows() != entries.ncols() {
            return Err(Error::ShapeMismatch(format!(
                "feature matrix must be square, got {}x{}",
                entries.nrows(),
                entries.ncols()
            )));
        }
        if entries.is_empty() {
            return Err(Error::EmptyInput("feature matrix"));
        }
        if !entries.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(
                "feature matrix contains non-finite entries".into(),
            ));
        }
        let scale = entries.iter().fold(T::zero(), |m, v| m.max(v.abs()));
        let tol = T::from_f64(1e-8) * scale.max(T::one());
        let delta = max_asymmetry(&entries.view());
        if delta > tol {
            return Err(Error::NotSymmetric {
                max_delta: delta.to_f64_lossy(),
            });
        }
        let mut sym = entries;
        let n = sym.nrows();
        for i in 0..n {
            for j in (i + 1)..n {
                let avg = (sym[[i, j]] + sym[[j, i]]) * T::from_f64(0.5);
                sym[[i, j]] = avg;
                sym[[j, i]] = avg;
            }
        }
        Ok(Self { entries: sym })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            entries: Array2::eye(dim),
        }
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            entries: Array2::zeros((dim, dim)),
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.nrows()
    }

    pub fn entries(&self) -> &Array2<T> {
        &self.entries
    }

    pub fn view(&self) -> ArrayView2<'_, T> {
        self.entries.view()
    }

    pub fn into_entries(self) -> Array2<T> {
        self.entries
    }

    pub fn trace(&self) -> T {
        self.entries.diag().iter().copied().sum()
    }

    pub fn is_identity(&self) -> bool {
        let n = self.dim();
        for i in 0..n {
            for j in 0..n {
                let want = if i == j { T::one() } else { T::zero() };
                if self.entries[[i, j]] != want {
                    return false;
                }
            }
        }
        true
    }

    /// Eigenvalues in descending order.
    pub fn eigenvalues(&self) -> Result<Vec<T>> {
        Ok(sym_eigen(&self.view())?.values)
    }

    /// Smallest eigenvalue; the matrix is PSD up to roundoff iff this is
    /// bounded below by a tiny negative multiple of the top eigenvalue.
    pub fn min_eigenvalue(&self) -> Result<T> {
        let vals = self.eigenvalues()?;
        Ok(*vals.last().expect("non-empty spectrum"))
    }

    pub fn scale(&self, factor: T) -> Self {
        Self {
            entries: &self.entries * factor,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    #[test]
    fn identity_has_unit_trace_per_row() {
        let m = FeatureMatrix::<f64>::identity(4);
        assert_eq!(m.trace(), 4.0);
        assert!(m.is_identity());
    }

    #[test]
    fn construction_rejects_asymmetry() {
        let a = arr2(&[[1.0, 0.5], [0.0, 1.0]]);
        assert!(matches!(
            FeatureMatrix::new(a),
            Err(Error::NotSymmetric { .. })
        ));
    }

    #[test]
    fn construction_symmetrizes_roundoff() {
        let a = arr2(&[[1.0, 0.5 + 1e-14], [0.5, 1.0]]);
        let m = FeatureMatrix::new(a).unwrap();
        assert_eq!(m.entries()[[0, 1]], m.entries()[[1, 0]]);
    }

    #[test]
    fn construction_rejects_non_finite() {
        let a = arr2(&[[1.0, f64::NAN], [f64::NAN, 1.0]]);
        assert!(FeatureMatrix::new(a).is_err());
    }

    #[test]
    fn eigenvalues_of_identity_are_ones() {
        let m = FeatureMatrix::<f64>::identity(3);
        let vals = m.eigenvalues().unwrap();
        assert_eq!(vals, vec![1.0, 1.0, 1.0]);
        assert_eq!(m.min_eigenvalue().unwrap(), 1.0);
    }
}
