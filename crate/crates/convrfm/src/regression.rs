//! Ridge-regularized kernel regression: solver, predictor, and the
//! per-class patch gradients that feed the AGOP.
//!
//! The linear system is always solved in normalized form: with
//! `kmax = max entry of K(X, X)`, coefficients satisfy
//! `(K/kmax + lambda I) alpha^T = y`, and predictions are
//! `alpha . k(X, x) / kmax`. Multi-class targets are one-hot columns with one
//! coefficient row per class; the predicted label is the argmax score.

use std::sync::Arc;

use ndarray::{Array1, Array2, ArrayView2};
use rayon::prelude::*;

use crate::agop::PatchGradientSource;
use crate::error::{Error, Result};
use crate::feature::FeatureMatrix;
use crate::kernel::{prepare_all, KernelContext, KernelSpec, PairCoeffs, PreparedImage};
use crate::linalg::{cholesky, cholesky_solve, sym_eigen};
use crate::scalar::Scalar;
use crate::tensor::{ImageTensor, PatchGrid};

/// Regularization grid searched by the feature-learning loop.
pub const RIDGE_GRID: [f64; 3] = [1e-8, 1e-5, 1e-3];

/// Retry regularization when the factorization fails at the requested ridge.
pub const RIDGE_RETRY_FLOOR: f64 = 1e-8;

/// Which class output a gradient request refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputSelector {
    /// The class with the highest predicted score (first on ties).
    Argmax,
    Index(usize),
}

/// Solves `(K + lambda I) A = Y` for an already-normalized symmetric system
/// matrix, with one automatic retry at `max(lambda, 1e-8)` before giving up
/// with a singular-kernel error carrying a condition estimate.
pub fn solve_regularized<T: Scalar>(
    k: &Array2<T>,
    y: &ArrayView2<'_, T>,
    ridge: T,
) -> Result<Array2<T>> {
    let n = k.nrows();
    if k.ncols() != n {
        return Err(Error::ShapeMismatch(format!(
            "kernel system matrix must be square, got {}x{}",
            n,
            k.ncols()
        )));
    }
    if y.nrows() != n {
        return Err(Error::DimensionMismatch {
            context: "kernel system target rows",
            expected: n,
            got: y.nrows(),
        });
    }
    if !(ridge.is_finite() && ridge >= T::zero()) {
        return Err(Error::InvalidArgument(
            "ridge must be finite and nonnegative".into(),
        ));
    }
    let attempt = |lam: T| -> Result<Array2<T>> {
        let mut sys = k.clone();
        for i in 0..n {
            sys[[i, i]] += lam;
        }
        let l = cholesky(&sys.view())?;
        cholesky_solve(&l.view(), y)
    };
    match attempt(ridge) {
        Err(Error::NotPositiveDefinite { .. }) => {
            let floor = T::from_f64(RIDGE_RETRY_FLOOR);
            let boosted = if ridge > floor { ridge } else { floor };
            match attempt(boosted) {
                Err(Error::NotPositiveDefinite { .. }) => {
                    let mut sys = k.clone();
                    for i in 0..n {
                        sys[[i, i]] += boosted;
                    }
                    let condition = sym_eigen(&sys.view())
                        .map(|e| e.condition_estimate())
                        .unwrap_or(f64::INFINITY);
                    Err(Error::SingularKernel { condition })
                }
                other => other,
            }
        }
        other => other,
    }
}

/// A kernel Gram matrix prepared once and reusable across ridge values and
/// target matrices; the normalizer is already divided out.
pub struct PreparedKernel<T> {
    ctx: KernelContext<T>,
    train: Arc<Vec<PreparedImage<T>>>,
    gram_normalized: Array2<T>,
    kernel_max: T,
}

impl<T: Scalar> PreparedKernel<T> {
    pub fn new(xs: &[ImageTensor<T>], m: &FeatureMatrix<T>, spec: &KernelSpec<T>) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::EmptyInput("kernel regression training set"));
        }
        let ctx = KernelContext::new(spec, m)?;
        let train = prepare_all(&ctx, xs)?;
        let gram = ctx.gram(&train)?;
        let raw_max = gram.iter().fold(T::neg_infinity(), |m, v| m.max(*v));
        // A kernel matrix with no positive entry cannot normalize anything.
        let kernel_max = if raw_max > T::zero() { raw_max } else { T::one() };
        let gram_normalized = gram.mapv(|v| v / kernel_max);
        Ok(Self {
            ctx,
            train: Arc::new(train),
            gram_normalized,
            kernel_max,
        })
    }

    pub fn n_train(&self) -> usize {
        self.train.len()
    }

    pub fn kernel_max(&self) -> T {
        self.kernel_max
    }

    pub fn gram_normalized(&self) -> &Array2<T> {
        &self.gram_normalized
    }

    /// `k(queries, X) / kmax`: one normalized kernel row per query, shared by
    /// every model solved from this prepared Gram.
    pub fn cross_normalized(&self, queries: &[ImageTensor<T>]) -> Result<Array2<T>> {
        let prepared = prepare_all(&self.ctx, queries)?;
        let cross = self.ctx.cross_matrix(&prepared, &self.train)?;
        Ok(cross.mapv(|v| v / self.kernel_max))
    }

    pub fn solve(&self, targets: &ArrayView2<'_, T>, ridge: T) -> Result<KernelModel<T>> {
        if targets.ncols() == 0 {
            return Err(Error::EmptyInput("kernel regression target columns"));
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(
                "kernel regression targets must be finite".into(),
            ));
        }
        let coeffs = solve_regularized(&self.gram_normalized, targets, ridge)?;
        Ok(KernelModel {
            ctx: self.ctx.clone(),
            train: self.train.clone(),
            targets: targets.to_owned(),
            alpha: coeffs.t().to_owned(),
            ridge,
            kernel_max: self.kernel_max,
        })
    }
}

/// One-shot fit: Gram construction, normalization, and solve.
pub fn fit<T: Scalar>(
    xs: &[ImageTensor<T>],
    y: &Array2<T>,
    m: &FeatureMatrix<T>,
    spec: &KernelSpec<T>,
    ridge: T,
) -> Result<KernelModel<T>> {
    if y.nrows() != xs.len() {
        return Err(Error::DimensionMismatch {
            context: "kernel regression target rows",
            expected: xs.len(),
            got: y.nrows(),
        });
    }
    PreparedKernel::new(xs, m, spec)?.solve(&y.view(), ridge)
}

/// A fitted kernel regressor; immutable and shareable across threads.
#[derive(Clone)]
pub struct KernelModel<T> {
    ctx: KernelContext<T>,
    train: Arc<Vec<PreparedImage<T>>>,
    targets: Array2<T>,
    /// classes x n coefficient rows.
    alpha: Array2<T>,
    ridge: T,
    kernel_max: T,
}

impl<T: Scalar> KernelModel<T> {
    pub fn n_train(&self) -> usize {
        self.train.len()
    }

    pub fn classes(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn alpha(&self) -> &Array2<T> {
        &self.alpha
    }

    pub fn targets(&self) -> &Array2<T> {
        &self.targets
    }

    pub fn ridge(&self) -> T {
        self.ridge
    }

    pub fn kernel_max(&self) -> T {
        self.kernel_max
    }

    pub fn spec(&self) -> &KernelSpec<T> {
        self.ctx.spec()
    }

    /// Prepares a query for repeated use against this model.
    pub fn prepare(&self, x: &ImageTensor<T>) -> Result<PreparedImage<T>> {
        self.ctx.prepare(x)
    }

    pub fn prepare_grid(&self, grid: &PatchGrid<T>) -> Result<PreparedImage<T>> {
        self.ctx.prepare_grid(grid)
    }

    /// `k(X, x) / kmax` against every training point.
    fn kernel_row(&self, query: &PreparedImage<T>) -> Result<Array1<T>> {
        let mut row = Array1::zeros(self.train.len());
        for (i, a) in self.train.iter().enumerate() {
            row[i] = self.ctx.eval(a, query)? / self.kernel_max;
        }
        Ok(row)
    }

    /// Per-class scores for one prepared query.
    pub fn predict_prepared(&self, query: &PreparedImage<T>) -> Result<Vec<T>> {
        let row = self.kernel_row(query)?;
        Ok(self.alpha.dot(&row).to_vec())
    }

    pub fn predict(&self, x: &ImageTensor<T>) -> Result<Vec<T>> {
        let q = self.ctx.prepare(x)?;
        self.predict_prepared(&q)
    }

    pub fn predict_grid(&self, grid: &PatchGrid<T>) -> Result<Vec<T>> {
        let q = self.ctx.prepare_grid(grid)?;
        self.predict_prepared(&q)
    }

    /// Scores for a batch, one row per query.
    pub fn predict_batch(&self, xs: &[ImageTensor<T>]) -> Result<Array2<T>> {
        if xs.is_empty() {
            return Err(Error::EmptyInput("prediction batch"));
        }
        let rows: Vec<Result<Vec<T>>> = xs.par_iter().map(|x| self.predict(x)).collect();
        let mut out = Array2::zeros((xs.len(), self.classes()));
        for (i, row) in rows.into_iter().enumerate() {
            for (c, v) in row?.into_iter().enumerate() {
                out[[i, c]] = v;
            }
        }
        Ok(out)
    }

    /// Gradients of the requested class scores with respect to the query's
    /// patches, in original coordinates: for class `c`
    /// `grad f_c(x)[u] = sum_i (alpha_ci / kmax) grad_{x[u]} k(x_i, x)`.
    fn assemble_gradients(
        &self,
        query: &PreparedImage<T>,
        class_indices: &[usize],
    ) -> Result<Vec<PatchGrid<T>>> {
        let coeffs: Vec<PairCoeffs<T>> = self
            .train
            .par_iter()
            .map(|a| self.ctx.pair_patch_coeffs(a, query))
            .collect::<Result<Vec<_>>>()?;
        let npos = query.n_positions();
        let d = query.patch_dim();
        let inv_kmax = T::one() / self.kernel_max;
        let fb = query
            .rows()
            .as_slice()
            .expect("prepared rows are contiguous");
        let grids: Vec<Result<PatchGrid<T>>> = class_indices
            .par_iter()
            .map(|&c| {
                let mut acc = Array2::<T>::zeros((npos, d));
                let flat = acc.as_slice_mut().expect("freshly allocated");
                let mut self_weight = vec![T::zero(); npos];
                for (i, a) in self.train.iter().enumerate() {
                    let w = self.alpha[[c, i]] * inv_kmax;
                    if w == T::zero() {
                        continue;
                    }
                    let pc = &coeffs[i];
                    let fa = a.rows().as_slice().expect("prepared rows are contiguous");
                    for u in 0..npos {
                        let c1 = w * pc.c_other[u];
                        if c1 != T::zero() {
                            let (row_a, row_out) =
                                (&fa[u * d..(u + 1) * d], &mut flat[u * d..(u + 1) * d]);
                            for k in 0..d {
                                row_out[k] += c1 * row_a[k];
                            }
                        }
                        self_weight[u] += w * pc.c_self[u];
                    }
                }
                for u in 0..npos {
                    let s = self_weight[u];
                    if s != T::zero() {
                        for k in 0..d {
                            flat[u * d + k] += s * fb[u * d + k];
                        }
                    }
                }
                let rows = self.ctx.to_original_coords(acc);
                PatchGrid::new(
                    query.channels(),
                    query.patch_size(),
                    query.grid_dims().0,
                    query.grid_dims().1,
                    rows,
                )
            })
            .collect();
        grids.into_iter().collect()
    }

    /// Patch gradient of one output, selected by index or argmax score.
    pub fn predict_gradient(
        &self,
        x: &ImageTensor<T>,
        selector: OutputSelector,
    ) -> Result<PatchGrid<T>> {
        let q = self.ctx.prepare(x)?;
        self.gradient_prepared(&q, selector)
    }

    pub fn gradient_grid(
        &self,
        grid: &PatchGrid<T>,
        selector: OutputSelector,
    ) -> Result<PatchGrid<T>> {
        let q = self.ctx.prepare_grid(grid)?;
        self.gradient_prepared(&q, selector)
    }

    fn gradient_prepared(
        &self,
        query: &PreparedImage<T>,
        selector: OutputSelector,
    ) -> Result<PatchGrid<T>> {
        let c = match selector {
            OutputSelector::Index(i) => {
                if i >= self.classes() {
                    return Err(Error::InvalidArgument(format!(
                        "output index {i} out of range for {} classes",
                        self.classes()
                    )));
                }
                i
            }
            OutputSelector::Argmax => {
                let scores = self.predict_prepared(query)?;
                let mut best = 0;
                for (i, v) in scores.iter().enumerate() {
                    if *v > scores[best] {
                        best = i;
                    }
                }
                best
            }
        };
        let mut grids = self.assemble_gradients(query, &[c])?;
        Ok(grids.pop().expect("one class requested"))
    }
}

impl<T: Scalar> PatchGradientSource<T> for KernelModel<T> {
    /// One gradient grid per class output; their outer products sum into the
    /// AGOP, treating each class column as a scalar predictor.
    fn per_output_patch_gradients(&self, x: &ImageTensor<T>) -> Result<Vec<PatchGrid<T>>> {
        let q = self.ctx.prepare(x)?;
        let all: Vec<usize> = (0..self.classes()).collect();
        self.assemble_gradients(&q, &all)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{kernel_patch_gradient, kernel_value, KernelSpec};
    use crate::scalar::Scalar;
    use crate::seeds::rng_for;
    use crate::tensor::PatchSpec;
    use ndarray::arr2;

    fn random_image(c: usize, h: usize, w: usize, seed: u64) -> ImageTensor<f64> {
        let mut rng = rng_for(seed, "regression-test-image");
        ImageTensor::from_fn(c, h, w, |_, _, _| f64::standard_normal(&mut rng))
    }

    fn random_psd(dim: usize, seed: u64) -> FeatureMatrix<f64> {
        let mut rng = rng_for(seed, "regression-test-psd");
        let a = Array2::from_shape_fn((dim, dim), |_| f64::standard_normal(&mut rng));
        FeatureMatrix::new(a.t().dot(&a)).unwrap()
    }

    #[test]
    fn solver_matches_two_by_two_inverse_oracle() {
        let k: Array2<f64> = arr2(&[[2.0, 1.0], [1.0, 2.0]]);
        let y: Array2<f64> = arr2(&[[1.0], [0.0]]);
        let a = solve_regularized(&k, &y.view(), 0.0).unwrap();
        assert!((a[[0, 0]] - 2.0 / 3.0).abs() < 1e-12);
        assert!((a[[1, 0]] + 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn solver_identity_system_returns_targets() {
        let k = Array2::<f64>::eye(2);
        let y: Array2<f64> = arr2(&[[1.0], [2.0]]);
        let a = solve_regularized(&k, &y.view(), 0.0).unwrap();
        assert!((a[[0, 0]] - 1.0).abs() < 1e-14);
        assert!((a[[1, 0]] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn solver_reports_singular_kernel_after_retry() {
        // Indefinite matrix: both the requested ridge and the boosted retry
        // fail, surfacing the condition estimate.
        let k: Array2<f64> = arr2(&[[1.0, 2.0], [2.0, 1.0]]);
        let y: Array2<f64> = arr2(&[[1.0], [0.0]]);
        match solve_regularized(&k, &y.view(), 0.0) {
            Err(Error::SingularKernel { condition }) => {
                assert!(condition.is_finite() && condition > 1.0);
            }
            other => panic!("expected singular-kernel error, got {other:?}"),
        }
    }

    #[test]
    fn distant_laplace_points_give_identity_like_fit() {
        // Mutually distant inputs make K/kmax ~ I, so alpha ~ y.
        let mut far = ImageTensor::<f64>::zeros(1, 4, 4);
        for v in far.as_mut_slice() {
            *v = 50.0;
        }
        let near = ImageTensor::<f64>::zeros(1, 4, 4);
        let spec = KernelSpec::conv_laplace(PatchSpec::new(2, 1, 0).unwrap());
        let m = FeatureMatrix::identity(4);
        let y: Array2<f64> = arr2(&[[1.0], [2.0]]);
        let model = fit(&[near, far], &y, &m, &spec, 0.0).unwrap();
        assert!((model.alpha()[[0, 0]] - 1.0).abs() < 1e-6);
        assert!((model.alpha()[[0, 1]] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn single_point_fit_matches_scalar_solve() {
        let x = random_image(1, 4, 4, 1);
        let spec = KernelSpec::relu_cnngp(1, PatchSpec::new(2, 1, 0).unwrap()).unwrap();
        let m = FeatureMatrix::identity(4);
        let ridge = 1e-3;
        let y: Array2<f64> = arr2(&[[0.7]]);
        let model = fit(std::slice::from_ref(&x), &y, &m, &spec, ridge).unwrap();
        let k11 = kernel_value(&x, &x, &m, &spec).unwrap();
        let kmax = model.kernel_max();
        assert_eq!(kmax, k11, "n = 1 normalizer is the self kernel value");
        let expected = 0.7 * kmax / (k11 + ridge * kmax);
        assert!((model.alpha()[[0, 0]] - expected).abs() < 1e-12);
    }

    #[test]
    fn interpolation_reproduces_training_targets() {
        let xs: Vec<_> = (0..6).map(|i| random_image(1, 5, 5, 10 + i)).collect();
        let spec = KernelSpec::relu_cnngp(1, PatchSpec::new(3, 1, 0).unwrap()).unwrap();
        let m = random_psd(9, 20);
        let mut rng = rng_for(21, "targets");
        let y = Array2::from_shape_fn((6, 2), |_| f64::standard_normal(&mut rng));
        let model = fit(&xs, &y, &m, &spec, 0.0).unwrap();
        for (i, x) in xs.iter().enumerate() {
            let scores = model.predict(x).unwrap();
            for c in 0..2 {
                assert!(
                    (scores[c] - y[[i, c]]).abs() <= 1e-6,
                    "train point {i} class {c}: {} vs {}",
                    scores[c],
                    y[[i, c]]
                );
            }
        }
    }

    #[test]
    fn predictions_match_brute_force_alpha_dot_k() {
        let xs: Vec<_> = (0..8).map(|i| random_image(1, 5, 5, 30 + i)).collect();
        let z = random_image(1, 5, 5, 40);
        let spec = KernelSpec::relu_cnngp(2, PatchSpec::new(2, 1, 0).unwrap()).unwrap();
        let m = random_psd(4, 41);
        let mut rng = rng_for(42, "targets");
        let y = Array2::from_shape_fn((8, 3), |_| f64::standard_normal(&mut rng));
        let model = fit(&xs, &y, &m, &spec, 1e-5).unwrap();
        let scores = model.predict(&z).unwrap();
        for c in 0..3 {
            let mut manual = 0.0;
            for (i, x) in xs.iter().enumerate() {
                manual += model.alpha()[[c, i]] * kernel_value(x, &z, &m, &spec).unwrap()
                    / model.kernel_max();
            }
            assert!(
                (scores[c] - manual).abs() < 1e-10,
                "class {c}: {} vs {manual}",
                scores[c]
            );
        }
        let batch = model.predict_batch(std::slice::from_ref(&z)).unwrap();
        for c in 0..3 {
            assert_eq!(batch[[0, c]], scores[c], "batch path is the same product");
        }
    }

    #[test]
    fn zero_targets_give_zero_alpha_predictions_and_gradients() {
        let xs: Vec<_> = (0..3).map(|i| random_image(1, 4, 4, 50 + i)).collect();
        let spec = KernelSpec::relu_cnngp(1, PatchSpec::new(2, 1, 0).unwrap()).unwrap();
        let m = FeatureMatrix::identity(4);
        let y = Array2::<f64>::zeros((3, 2));
        let model = fit(&xs, &y, &m, &spec, 1e-5).unwrap();
        assert!(model.alpha().iter().all(|v| *v == 0.0));
        let z = random_image(1, 4, 4, 60);
        assert!(model.predict(&z).unwrap().iter().all(|v| *v == 0.0));
        let g = model.predict_gradient(&z, OutputSelector::Index(0)).unwrap();
        assert!(g.rows().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn train_mse_is_nondecreasing_along_the_ridge_path() {
        let xs: Vec<_> = (0..7).map(|i| random_image(1, 5, 5, 70 + i)).collect();
        let spec = KernelSpec::relu_cnngp(1, PatchSpec::new(3, 1, 0).unwrap()).unwrap();
        let m = random_psd(9, 80);
        let mut rng = rng_for(81, "targets");
        let y = Array2::from_shape_fn((7, 1), |_| f64::standard_normal(&mut rng));
        let prepared = PreparedKernel::new(&xs, &m, &spec).unwrap();
        let mut prev = -1.0f64;
        for ridge in [0.0, 1e-8, 1e-5, 1e-3] {
            let model = prepared.solve(&y.view(), ridge).unwrap();
            let mut mse = 0.0;
            for (i, x) in xs.iter().enumerate() {
                let p = model.predict(x).unwrap()[0];
                mse += (p - y[[i, 0]]).powi(2);
            }
            mse /= xs.len() as f64;
            assert!(
                mse >= prev - 1e-12,
                "train MSE decreased from {prev} to {mse} at ridge {ridge}"
            );
            prev = mse;
        }
    }

    #[test]
    fn single_train_point_gradient_is_scaled_kernel_gradient() {
        let x = random_image(1, 4, 4, 90);
        let z = random_image(1, 4, 4, 91);
        let spec = KernelSpec::relu_cnngp(1, PatchSpec::new(2, 1, 0).unwrap()).unwrap();
        let m = random_psd(4, 92);
        let y: Array2<f64> = arr2(&[[1.3]]);
        let model = fit(std::slice::from_ref(&x), &y, &m, &spec, 1e-5).unwrap();
        let got = model.predict_gradient(&z, OutputSelector::Index(0)).unwrap();
        let unit = kernel_patch_gradient(&x, &z, &m, &spec).unwrap();
        let scale = model.alpha()[[0, 0]] / model.kernel_max();
        let err = got
            .rows()
            .iter()
            .zip(unit.rows().iter())
            .map(|(g, u)| (g - scale * u).abs())
            .fold(0.0f64, f64::max);
        assert!(err < 1e-12, "linearity in a single alpha: err {err}");
    }

    #[test]
    fn class_gradients_match_naive_weighted_sum() {
        let xs: Vec<_> = (0..4).map(|i| random_image(1, 5, 5, 100 + i)).collect();
        let z = random_image(1, 5, 5, 110);
        let patch = PatchSpec::new(2, 1, 0).unwrap();
        let m = random_psd(4, 111);
        let mut rng = rng_for(112, "targets");
        let y = Array2::from_shape_fn((4, 2), |_| f64::standard_normal(&mut rng));
        for spec in [
            KernelSpec::relu_cnngp(2, patch).unwrap(),
            KernelSpec::conv_laplace(patch),
        ] {
            let model = fit(&xs, &y, &m, &spec, 1e-5).unwrap();
            let grids = model.per_output_patch_gradients(&z).unwrap();
            assert_eq!(grids.len(), 2);
            for (c, grid) in grids.iter().enumerate() {
                let mut manual = Array2::<f64>::zeros((grid.n_positions(), grid.patch_dim()));
                for (i, x) in xs.iter().enumerate() {
                    let g = kernel_patch_gradient(x, &z, &m, &spec).unwrap();
                    let w = model.alpha()[[c, i]] / model.kernel_max();
                    manual = manual + g.rows().mapv(|v| v * w);
                }
                let err = (grid.rows() - &manual)
                    .iter()
                    .fold(0.0f64, |mx, v| mx.max(v.abs()));
                assert!(
                    err < 1e-10,
                    "family {:?} class {c}: batched vs naive err {err}",
                    spec.family
                );
            }
        }
    }

    #[test]
    fn predict_gradient_matches_finite_differences() {
        let xs: Vec<_> = (0..3).map(|i| random_image(1, 5, 5, 120 + i)).collect();
        let z = random_image(1, 5, 5, 130);
        let patch = PatchSpec::new(2, 1, 0).unwrap();
        let mut rng = rng_for(131, "targets");
        let y = Array2::from_shape_fn((3, 2), |_| f64::standard_normal(&mut rng));
        for spec in [
            KernelSpec::relu_cnngp(1, patch).unwrap(),
            KernelSpec::relu_cnngp(2, patch).unwrap(),
            KernelSpec::conv_laplace(patch),
        ] {
            for m in [FeatureMatrix::identity(4), random_psd(4, 132)] {
                let model = fit(&xs, &y, &m, &spec, 1e-5).unwrap();
                let gz = crate::tensor::extract_patches(&z, &patch).unwrap();
                let analytic = model.gradient_grid(&gz, OutputSelector::Index(1)).unwrap();
                let h = 1e-5;
                let mut fd = Array2::<f64>::zeros((gz.n_positions(), gz.patch_dim()));
                for u in 0..gz.n_positions() {
                    for k in 0..gz.patch_dim() {
                        let mut plus = gz.clone();
                        plus.rows_mut()[[u, k]] += h;
                        let mut minus = gz.clone();
                        minus.rows_mut()[[u, k]] -= h;
                        let vp = model.predict_grid(&plus).unwrap()[1];
                        let vm = model.predict_grid(&minus).unwrap()[1];
                        fd[[u, k]] = (vp - vm) / (2.0 * h);
                    }
                }
                let num = (analytic.rows() - &fd)
                    .iter()
                    .map(|v| v * v)
                    .sum::<f64>()
                    .sqrt();
                let den = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                assert!(
                    num / den <= 1e-4,
                    "family {:?} depth {}: rel err {}",
                    spec.family,
                    spec.depth,
                    num / den
                );
            }
        }
    }

    #[test]
    fn argmax_selector_follows_the_top_score() {
        let xs: Vec<_> = (0..3).map(|i| random_image(1, 4, 4, 140 + i)).collect();
        let z = random_image(1, 4, 4, 150);
        let spec = KernelSpec::relu_cnngp(1, PatchSpec::new(2, 1, 0).unwrap()).unwrap();
        let m = FeatureMatrix::identity(4);
        let mut rng = rng_for(151, "targets");
        let y = Array2::from_shape_fn((3, 3), |_| f64::standard_normal(&mut rng));
        let model = fit(&xs, &y, &m, &spec, 1e-5).unwrap();
        let scores = model.predict(&z).unwrap();
        let top = scores
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
            .unwrap()
            .0;
        let via_argmax = model.predict_gradient(&z, OutputSelector::Argmax).unwrap();
        let via_index = model
            .predict_gradient(&z, OutputSelector::Index(top))
            .unwrap();
        assert_eq!(via_argmax.rows(), via_index.rows());
        assert!(model
            .predict_gradient(&z, OutputSelector::Index(7))
            .is_err());
    }

    #[test]
    fn shape_and_argument_validation() {
        let xs: Vec<_> = (0..2).map(|i| random_image(1, 4, 4, 160 + i)).collect();
        let spec = KernelSpec::relu_cnngp(1, PatchSpec::new(2, 1, 0).unwrap()).unwrap();
        let m = FeatureMatrix::identity(4);
        let y_bad = Array2::<f64>::zeros((3, 1));
        assert!(matches!(
            fit(&xs, &y_bad, &m, &spec, 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
        let y = Array2::<f64>::zeros((2, 1));
        assert!(fit(&xs, &y, &m, &spec, -1.0).is_err());
        let model = fit(&xs, &y, &m, &spec, 0.0).unwrap();
        let wrong_shape = random_image(1, 5, 5, 170);
        assert!(model.predict(&wrong_shape).is_err());
    }
}
