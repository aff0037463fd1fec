//! Patch-wise average gradient outer products, PSD utilities, and the
//! matrix-similarity metrics used for feature-learning verification.

use ndarray::{Array2, ArrayView2};
use rayon::prelude::*;
use std::path::Path;

use crate::container::{ContainerReader, ContainerWriter};
use crate::error::{Error, Result};
use crate::feature::FeatureMatrix;
use crate::linalg::{best_scale, frobenius_inner, frobenius_norm, matrix_mean, sym_eigen};
use crate::scalar::Scalar;
use crate::tensor::{ImageTensor, PatchGrid};

/// Predictors that expose per-output, per-position patch gradients.
///
/// For a multi-output predictor each element of the returned vector is the
/// gradient grid of one output coordinate; the AGOP sums outer products over
/// all of them.
pub trait PatchGradientSource<T: Scalar>: Sync {
    fn per_output_patch_gradients(&self, x: &ImageTensor<T>) -> Result<Vec<PatchGrid<T>>>;
}

/// Exponent applied to the AGOP before it feeds the next kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgopExponent {
    One,
    Half,
}

/// Sample-chunk size for the deterministic parallel reduction; fixed so the
/// summation tree never depends on the worker count.
const AGOP_CHUNK: usize = 16;

/// Average gradient outer product over `xs`:
/// `(1/n) sum_x sum_outputs sum_positions g g^T`.
pub fn compute_agop<T: Scalar>(
    source: &dyn PatchGradientSource<T>,
    xs: &[ImageTensor<T>],
) -> Result<FeatureMatrix<T>> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("compute_agop sample list"));
    }
    let probe = source.per_output_patch_gradients(&xs[0])?;
    let dim = probe
        .first()
        .ok_or(Error::EmptyInput("predictor outputs"))?
        .patch_dim();
    let partials: Vec<Result<Array2<T>>> = xs
        .par_chunks(AGOP_CHUNK)
        .map(|chunk| {
            let mut acc = Array2::<T>::zeros((dim, dim));
            for x in chunk {
                let grids = source.per_output_patch_gradients(x)?;
                for grid in &grids {
                    if grid.patch_dim() != dim {
                        return Err(Error::DimensionMismatch {
                            context: "patch gradient dimension",
                            expected: dim,
                            got: grid.patch_dim(),
                        });
                    }
                    let g = grid.rows();
                    acc = acc + g.t().dot(g);
                }
            }
            Ok(acc)
        })
        .collect();
    let mut total = Array2::<T>::zeros((dim, dim));
    for p in partials {
        total = total + p?;
    }
    let scale = T::one() / T::from_usize(xs.len());
    FeatureMatrix::new(total * scale)
}

/// Symmetric PSD square root: eigenvalues clipped at zero, square-rooted,
/// recomposed. Returns the root and the most negative pre-clip eigenvalue
/// for diagnostics.
pub fn matrix_sqrt_with_report<T: Scalar>(m: &FeatureMatrix<T>) -> Result<(FeatureMatrix<T>, T)> {
    let eig = sym_eigen(&m.view())?;
    let most_negative = eig
        .values
        .iter()
        .copied()
        .fold(T::zero(), |worst, v| worst.min(v));
    let root = eig.reassemble(|l| l.max(T::zero()).sqrt());
    Ok((FeatureMatrix::new(root)?, most_negative))
}

pub fn matrix_sqrt<T: Scalar>(m: &FeatureMatrix<T>) -> Result<FeatureMatrix<T>> {
    Ok(matrix_sqrt_with_report(m)?.0)
}

/// `M^1` or `M^{1/2}` with PSD clipping.
pub fn matrix_power<T: Scalar>(
    m: &FeatureMatrix<T>,
    exponent: AgopExponent,
) -> Result<FeatureMatrix<T>> {
    match exponent {
        AgopExponent::One => Ok(m.clone()),
        AgopExponent::Half => matrix_sqrt(m),
    }
}

/// Pearson (mean-centered) and cosine similarity over flattened matrices.
#[derive(Debug, Clone, Copy)]
pub struct SimilarityReport<T> {
    pub pearson: T,
    pub cosine: T,
}

pub fn similarity<T: Scalar>(
    a: &FeatureMatrix<T>,
    b: &FeatureMatrix<T>,
) -> Result<SimilarityReport<T>> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "similarity operands",
            expected: a.dim(),
            got: b.dim(),
        });
    }
    Ok(SimilarityReport {
        pearson: pearson_flat(&a.view(), &b.view())?,
        cosine: cosine_flat(&a.view(), &b.view())?,
    })
}

fn pearson_flat<T: Scalar>(a: &ArrayView2<'_, T>, b: &ArrayView2<'_, T>) -> Result<T> {
    let ma = matrix_mean(a);
    let mb = matrix_mean(b);
    let ca = a.mapv(|v| v - ma);
    let cb = b.mapv(|v| v - mb);
    let na = frobenius_norm(&ca.view());
    let nb = frobenius_norm(&cb.view());
    if na == T::zero() || nb == T::zero() {
        return Err(Error::UndefinedStatistic(
            "pearson of a constant matrix is undefined",
        ));
    }
    Ok(frobenius_inner(&ca.view(), &cb.view()) / (na * nb))
}

fn cosine_flat<T: Scalar>(a: &ArrayView2<'_, T>, b: &ArrayView2<'_, T>) -> Result<T> {
    let na = frobenius_norm(a);
    let nb = frobenius_norm(b);
    if na == T::zero() || nb == T::zero() {
        return Err(Error::UndefinedStatistic(
            "cosine of a zero matrix is undefined",
        ));
    }
    Ok(frobenius_inner(a, b) / (na * nb))
}

/// Best scalar `c` minimizing `||a - c b||_F` and the relative residual
/// `||a - c b||_F / ||a||_F`; proportional matrices give residual ~0.
pub fn proportionality_residual<T: Scalar>(
    a: &FeatureMatrix<T>,
    b: &FeatureMatrix<T>,
) -> Result<(T, T)> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            context: "proportionality operands",
            expected: a.dim(),
            got: b.dim(),
        });
    }
    let norm_a = frobenius_norm(&a.view());
    if norm_a == T::zero() {
        return Err(Error::UndefinedStatistic(
            "proportionality residual of a zero matrix is undefined",
        ));
    }
    let c = best_scale(&a.view(), &b.view()).unwrap_or(T::zero());
    let diff = a.entries() - &(b.entries() * c);
    Ok((c, frobenius_norm(&diff.view()) / norm_a))
}

const FEATURE_MAGIC: [u8; 4] = *b"CNFM";

/// Writes a feature matrix: 16-byte header (magic, version, dim, reserved)
/// followed by the row-major entries as little-endian doubles.
pub fn write_feature_matrix<T: Scalar>(path: &Path, m: &FeatureMatrix<T>) -> Result<()> {
    let mut out = ContainerWriter::create(path)?;
    out.write_header(FEATURE_MAGIC, m.dim() as u32, 0)?;
    out.write_f64_iter(m.entries().iter().copied())?;
    out.finish()
}

/// Reads a feature matrix written by [`write_feature_matrix`].
pub fn read_feature_matrix<T: Scalar>(path: &Path) -> Result<FeatureMatrix<T>> {
    let mut r = ContainerReader::open(path)?;
    let (raw_dim, _reserved) = r.read_header(FEATURE_MAGIC)?;
    let dim = r.check_extent("feature matrix dimension", u64::from(raw_dim))? as usize;
    let data = r.read_f64_vec::<T>(dim * dim)?;
    r.expect_eof()?;
    let entries = Array2::from_shape_vec((dim, dim), data)
        .expect("vector length matches the declared square shape");
    FeatureMatrix::new(entries).map_err(|e| r.fail(e.to_string()))
}

/// Writes a feature matrix as plain CSV, one row per line, for inspection.
pub fn write_feature_matrix_csv<T: Scalar>(path: &Path, m: &FeatureMatrix<T>) -> Result<()> {
    let mut text = String::new();
    for row in m.entries().rows() {
        let line: Vec<String> = row.iter().map(|v| format!("{}", v.to_f64_lossy())).collect();
        text.push_str(&line.join(","));
        text.push('\n');
    }
    std::fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{extract_patches, PatchSpec};
    use ndarray::{arr2, Array2};
    use tempfile::tempdir;

    #[test]
    fn feature_matrix_file_round_trips() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.cnfm");
        let m =
            FeatureMatrix::<f64>::new(arr2(&[[2.0, -0.5], [-0.5, 3.25]])).unwrap();
        write_feature_matrix(&path, &m).unwrap();
        let back: FeatureMatrix<f64> = read_feature_matrix(&path).unwrap();
        assert_eq!(back.entries(), m.entries());
        // Header layout: magic, version, dim, reserved — 16 bytes.
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..4], b"CNFM");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 16 + 4 * 8);
    }

    #[test]
    fn truncated_feature_matrix_file_is_a_format_error() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.cnfm");
        let m = FeatureMatrix::<f64>::identity(3);
        write_feature_matrix(&path, &m).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(
            read_feature_matrix::<f64>(&path),
            Err(Error::Format { .. })
        ));
    }

    #[test]
    fn feature_matrix_csv_is_plain_rows() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let m = FeatureMatrix::<f64>::new(arr2(&[[1.0, 0.5], [0.5, 2.0]])).unwrap();
        write_feature_matrix_csv(&path, &m).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "1,0.5\n0.5,2\n");
    }

    /// f(x) = w . p for each patch p independently.
    struct PerPatchLinear {
        w: Vec<f64>,
        spec: PatchSpec,
    }

    impl PatchGradientSource<f64> for PerPatchLinear {
        fn per_output_patch_gradients(&self, x: &ImageTensor<f64>) -> Result<Vec<PatchGrid<f64>>> {
            let g = extract_patches(x, &self.spec)?;
            let rows = Array2::from_shape_fn((g.n_positions(), g.patch_dim()), |(_, j)| self.w[j]);
            Ok(vec![PatchGrid::new(
                g.channels(),
                g.patch_size(),
                g.grid_height(),
                g.grid_width(),
                rows,
            )?])
        }
    }

    fn outer(w: &[f64]) -> Array2<f64> {
        let d = w.len();
        Array2::from_shape_fn((d, d), |(i, j)| w[i] * w[j])
    }

    #[test]
    fn single_full_patch_linear_predictor_gives_w_outer_w() {
        let w = vec![1.0, -2.0, 0.5, 3.0];
        let src = PerPatchLinear {
            w: w.clone(),
            spec: PatchSpec::new(2, 2, 0).unwrap(),
        };
        let xs = vec![ImageTensor::zeros(1, 2, 2), ImageTensor::zeros(1, 2, 2)];
        let m = compute_agop(&src, &xs).unwrap();
        let err = (m.entries() - &outer(&w))
            .iter()
            .fold(0.0f64, |mx, v| mx.max(v.abs()));
        assert!(err < 1e-12, "AGOP deviates from w w^T by {err}");
    }

    #[test]
    fn summed_patch_predictor_scales_by_patch_count() {
        let w = vec![0.5, 1.0, -1.0, 2.0];
        let spec = PatchSpec::new(2, 1, 0).unwrap();
        let src = PerPatchLinear {
            w: w.clone(),
            spec,
        };
        let xs = vec![ImageTensor::zeros(1, 4, 3)];
        let g = extract_patches(&xs[0], &spec).unwrap();
        let m = compute_agop(&src, &xs).unwrap();
        let want = outer(&w) * g.n_positions() as f64;
        let err = (m.entries() - &want)
            .iter()
            .fold(0.0f64, |mx, v| mx.max(v.abs()));
        assert!(err < 1e-12);
    }

    #[test]
    fn agop_is_deterministic_across_runs() {
        let src = PerPatchLinear {
            w: vec![0.1, 0.2, 0.3, 0.4],
            spec: PatchSpec::new(2, 1, 0).unwrap(),
        };
        let xs: Vec<_> = (0..67).map(|_| ImageTensor::zeros(1, 5, 5)).collect();
        let a = compute_agop(&src, &xs).unwrap();
        let b = compute_agop(&src, &xs).unwrap();
        assert_eq!(a.entries(), b.entries());
    }

    #[test]
    fn gradient_scaling_squares_in_the_agop() {
        let w = vec![1.0, 2.0];
        let spec = PatchSpec::new(1, 1, 0).unwrap();
        let base = compute_agop(
            &PerPatchLinear {
                w: w.clone(),
                spec,
            },
            &[ImageTensor::zeros(2, 1, 1)],
        )
        .unwrap();
        let scaled = compute_agop(
            &PerPatchLinear {
                w: w.iter().map(|v| 3.0 * v).collect(),
                spec,
            },
            &[ImageTensor::zeros(2, 1, 1)],
        )
        .unwrap();
        let err = (scaled.entries() - &(base.entries() * 9.0))
            .iter()
            .fold(0.0f64, |mx, v| mx.max(v.abs()));
        assert!(err < 1e-12, "AGOP must scale quadratically in the gradients");
    }

    #[test]
    fn matrix_sqrt_of_identity_and_diagonal() {
        let id = FeatureMatrix::<f64>::identity(3);
        let root = matrix_sqrt(&id).unwrap();
        assert!(root.is_identity() || {
            let err = (root.entries() - id.entries())
                .iter()
                .fold(0.0f64, |m, v| m.max(v.abs()));
            err < 1e-12
        });
        let d = FeatureMatrix::<f64>::new(arr2(&[[4.0, 0.0], [0.0, 9.0]])).unwrap();
        let r = matrix_sqrt(&d).unwrap();
        assert!((r.entries()[[0, 0]] - 2.0).abs() < 1e-12);
        assert!((r.entries()[[1, 1]] - 3.0).abs() < 1e-12);
        assert!(r.entries()[[0, 1]].abs() < 1e-12);
    }

    #[test]
    fn matrix_sqrt_multiplies_back() {
        use crate::seeds::rng_for;
        let mut rng = rng_for(11, "sqrt-test");
        let a = Array2::from_shape_fn((9, 9), |_| f64::standard_normal(&mut rng));
        let psd = FeatureMatrix::new(a.t().dot(&a)).unwrap();
        let root = matrix_sqrt(&psd).unwrap();
        let back = root.entries().dot(root.entries());
        let rel = frobenius_norm(&(&back - psd.entries()).view())
            / frobenius_norm(&psd.view());
        assert!(rel < 1e-10, "multiply-back relative error {rel}");
    }

    #[test]
    fn matrix_sqrt_fixes_unit_projectors() {
        let w = [0.6, 0.8];
        let proj = FeatureMatrix::new(outer(&w)).unwrap();
        let root = matrix_sqrt(&proj).unwrap();
        let err = (root.entries() - proj.entries())
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        // A zero eigenvalue is resolved only to ~ulp, and sqrt amplifies that
        // noise to ~sqrt(ulp), so the fixed point holds to ~1e-8, not 1e-12.
        assert!(err < 5e-8, "sqrt of a rank-1 unit projector is itself: err {err}");
    }

    #[test]
    fn matrix_sqrt_reports_negative_leakage() {
        let m = FeatureMatrix::<f64>::new(arr2(&[[1.0, 0.0], [0.0, -1e-3]])).unwrap();
        let (root, most_negative) = matrix_sqrt_with_report(&m).unwrap();
        assert!((most_negative + 1e-3).abs() < 1e-12);
        assert_eq!(root.entries()[[1, 1]], 0.0);
    }

    #[test]
    fn similarity_of_matrix_with_itself_and_negation() {
        let m = FeatureMatrix::<f64>::new(arr2(&[[2.0, 1.0], [1.0, 3.0]])).unwrap();
        let s = similarity(&m, &m).unwrap();
        assert!((s.pearson - 1.0).abs() < 1e-12);
        assert!((s.cosine - 1.0).abs() < 1e-12);
        let neg = m.scale(-1.0);
        let s = similarity(&m, &neg).unwrap();
        assert!((s.pearson + 1.0).abs() < 1e-12);
        assert!((s.cosine + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_is_affine_invariant_cosine_matches_dot_oracle() {
        let m = FeatureMatrix::<f64>::new(arr2(&[[2.0, 1.0], [1.0, 3.0]])).unwrap();
        let shifted = FeatureMatrix::new(m.entries() * 2.0 + 3.0).unwrap();
        let s = similarity(&m, &shifted).unwrap();
        assert!((s.pearson - 1.0).abs() < 1e-12, "pearson must ignore affine shifts");
        let dot: f64 = m
            .entries()
            .iter()
            .zip(shifted.entries().iter())
            .map(|(a, b)| a * b)
            .sum();
        let na: f64 = m.entries().iter().map(|v| v * v).sum::<f64>().sqrt();
        let nb: f64 = shifted.entries().iter().map(|v| v * v).sum::<f64>().sqrt();
        assert!((s.cosine - dot / (na * nb)).abs() < 1e-12);
    }

    #[test]
    fn similarity_rejects_constant_matrices() {
        let ones = FeatureMatrix::new(Array2::<f64>::ones((3, 3))).unwrap();
        let m = FeatureMatrix::<f64>::identity(3);
        assert!(matches!(
            similarity(&ones, &m),
            Err(Error::UndefinedStatistic(_))
        ));
    }

    #[test]
    fn similarity_is_scale_invariant() {
        let m = FeatureMatrix::<f64>::new(arr2(&[[2.0, -1.0], [-1.0, 5.0]])).unwrap();
        let other = FeatureMatrix::<f64>::new(arr2(&[[1.0, 0.5], [0.5, 2.0]])).unwrap();
        let s1 = similarity(&m, &other).unwrap();
        let s2 = similarity(&m.scale(7.5), &other.scale(0.01)).unwrap();
        assert!((s1.pearson - s2.pearson).abs() < 1e-12);
        assert!((s1.cosine - s2.cosine).abs() < 1e-12);
    }

    #[test]
    fn proportionality_residual_detects_exact_multiples() {
        let m = FeatureMatrix::<f64>::new(arr2(&[[2.0, 1.0], [1.0, 3.0]])).unwrap();
        let (c, r) = proportionality_residual(&m.scale(4.0), &m).unwrap();
        assert!((c - 4.0).abs() < 1e-12);
        assert!(r < 1e-14);
    }
    #[test]
    fn feature_file_wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.cnfm");
        std::fs::write(&path, b"NOPE\x01\x00\x00\x00\x02\x00\x00\x00\x00\x00\x00\x00").unwrap();
        match read_feature_matrix::<f64>(&path) {
            Err(Error::Format { offset, message, .. }) => {
                assert_eq!(offset, 0);
                assert!(message.contains("CNFM"), "message: {message}");
            }
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn feature_file_trailing_bytes_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("long.cnfm");
        let m = FeatureMatrix::<f64>::identity(2);
        write_feature_matrix(&path, &m).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(matches!(
            read_feature_matrix::<f64>(&path),
            Err(Error::Format { .. })
        ));
    }

}
