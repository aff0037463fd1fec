//! The ConvRFM outer loop: alternate kernel-ridge fits and patch-AGOP
//! feature-matrix updates.
//!
//! Starting from `M = I`, each round fits ridge models over the regularization
//! grid, scores them on a held-out validation split, and computes the
//! patch-AGOP of the round's best model — which becomes both the next round's
//! kernel feature matrix and that round's learned-M candidate. The returned
//! pair is the model and learned M of the round with the best validation
//! accuracy (ties toward smaller ridge and earlier rounds).

use ndarray::{Array2, ArrayView2};

use crate::agop::{compute_agop, matrix_power, AgopExponent};
use crate::error::{Error, Result};
use crate::feature::FeatureMatrix;
use crate::kernel::KernelSpec;
use crate::linalg::sym_eigen;
use crate::regression::{KernelModel, PreparedKernel, RIDGE_GRID};
use crate::scalar::Scalar;
use crate::seeds::rng_for;
use rand::Rng;
use crate::tensor::ImageTensor;

pub const DEFAULT_ITERS: usize = 5;
pub const DEFAULT_VAL_FRACTION: f64 = 0.2;
/// Eigenvalues recorded per metrics row.
pub const METRICS_TOP_EIGENVALUES: usize = 5;

#[derive(Debug, Clone)]
pub struct RfmConfig<T> {
    pub iters: usize,
    /// Candidate ridge values, searched in ascending order.
    pub ridge_grid: Vec<T>,
    pub kernel: KernelSpec<T>,
    /// Power of the AGOP used as the next feature matrix.
    pub agop_exponent: AgopExponent,
    pub val_fraction: f64,
    pub seed: u64,
}

impl<T: Scalar> RfmConfig<T> {
    pub fn new(kernel: KernelSpec<T>) -> Self {
        Self {
            iters: DEFAULT_ITERS,
            ridge_grid: RIDGE_GRID.iter().map(|v| T::from_f64(*v)).collect(),
            kernel,
            agop_exponent: AgopExponent::One,
            val_fraction: DEFAULT_VAL_FRACTION,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.iters == 0 {
            return Err(Error::InvalidArgument("iters must be at least 1".into()));
        }
        if self.ridge_grid.is_empty() {
            return Err(Error::EmptyInput("ridge grid"));
        }
        if self
            .ridge_grid
            .iter()
            .any(|v| !(v.is_finite() && *v >= T::zero()))
        {
            return Err(Error::InvalidArgument(
                "ridge grid values must be finite and nonnegative".into(),
            ));
        }
        if !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return Err(Error::InvalidArgument(
                "val_fraction must lie strictly between 0 and 1".into(),
            ));
        }
        Ok(())
    }
}

/// One row of the per-round training record. `trace` and `top_eigenvalues`
/// describe the learned M produced by this round's AGOP update.
#[derive(Debug, Clone, PartialEq)]
pub struct IterationMetrics<T> {
    /// 1-based round number.
    pub iteration: usize,
    /// Ridge chosen for this round by validation accuracy.
    pub lambda: T,
    pub train_acc: f64,
    pub val_acc: f64,
    pub trace: T,
    /// Up to [`METRICS_TOP_EIGENVALUES`] leading eigenvalues, descending.
    pub top_eigenvalues: Vec<T>,
}

pub struct RfmOutcome<T> {
    /// Model from the best-validation round.
    pub model: KernelModel<T>,
    /// Learned feature matrix produced by that round's AGOP update.
    pub feature_matrix: FeatureMatrix<T>,
    pub metrics: Vec<IterationMetrics<T>>,
    /// 1-based index of the selected round.
    pub best_iteration: usize,
    /// Round-1 model (fit with M = identity): the fixed-kernel baseline.
    pub first_model: KernelModel<T>,
    /// Row indices of the fitting split within the input order.
    pub train_indices: Vec<usize>,
    pub val_indices: Vec<usize>,
}

/// Maps class labels to regression targets: binary problems use a single
/// ±1 column (class 1 → +1), larger ones a one-hot column per class.
pub fn encode_targets<T: Scalar>(labels: &[usize], classes: usize) -> Result<Array2<T>> {
    if labels.is_empty() {
        return Err(Error::EmptyInput("label list"));
    }
    if classes < 2 {
        return Err(Error::InvalidArgument(
            "classification needs at least 2 classes".into(),
        ));
    }
    if let Some(bad) = labels.iter().find(|l| **l >= classes) {
        return Err(Error::InvalidArgument(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    let mut out = if classes == 2 {
        Array2::zeros((labels.len(), 1))
    } else {
        Array2::zeros((labels.len(), classes))
    };
    for (i, l) in labels.iter().enumerate() {
        if classes == 2 {
            out[[i, 0]] = if *l == 1 { T::one() } else { -T::one() };
        } else {
            out[[i, *l]] = T::one();
        }
    }
    Ok(out)
}

/// Label read-out from score rows: sign for a single ±1 column, otherwise
/// argmax (first index on ties).
pub fn predicted_labels<T: Scalar>(scores: &ArrayView2<'_, T>) -> Vec<usize> {
    scores
        .rows()
        .into_iter()
        .map(|row| {
            if row.len() == 1 {
                usize::from(row[0] >= T::zero())
            } else {
                let mut best = 0;
                for (i, v) in row.iter().enumerate() {
                    if *v > row[best] {
                        best = i;
                    }
                }
                best
            }
        })
        .collect()
}

pub fn accuracy<T: Scalar>(scores: &ArrayView2<'_, T>, labels: &[usize]) -> f64 {
    let predicted = predicted_labels(scores);
    let hits = predicted
        .iter()
        .zip(labels)
        .filter(|(p, l)| *p == *l)
        .count();
    hits as f64 / labels.len() as f64
}

/// Deterministic validation split: a seeded shuffle of `0..n`, the first
/// `floor(n * val_fraction)` indices held out. Both halves returned sorted.
fn split_indices(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    let n_val = (n as f64 * val_fraction).floor() as usize;
    if n_val == 0 {
        return Err(Error::InvalidArgument(format!(
            "validation split is empty: {n} samples at fraction {val_fraction}"
        )));
    }
    if n_val >= n {
        return Err(Error::InvalidArgument(format!(
            "validation split leaves no training samples: {n} at fraction {val_fraction}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = rng_for(seed, "convrfm-val-split");
    // Fisher-Yates, fixed draw order for reproducibility.
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        idx.swap(i, j);
    }
    let mut val: Vec<usize> = idx[..n_val].to_vec();
    let mut train: Vec<usize> = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    Ok((train, val))
}

/// Runs the loop on class labels, encoding targets via [`encode_targets`].
pub fn run_convrfm<T: Scalar>(
    xs: &[ImageTensor<T>],
    labels: &[usize],
    classes: usize,
    config: &RfmConfig<T>,
) -> Result<RfmOutcome<T>> {
    let targets = encode_targets(labels, classes)?;
    run_convrfm_with_targets(xs, &targets, labels, config)
}

/// Core loop over explicit regression targets; `labels` drive the accuracy
/// used for ridge and round selection.
pub fn run_convrfm_with_targets<T: Scalar>(
    xs: &[ImageTensor<T>],
    targets: &Array2<T>,
    labels: &[usize],
    config: &RfmConfig<T>,
) -> Result<RfmOutcome<T>> {
    config.validate()?;
    if xs.is_empty() {
        return Err(Error::EmptyInput("convrfm training set"));
    }
    if xs.len() != labels.len() || xs.len() != targets.nrows() {
        return Err(Error::DimensionMismatch {
            context: "convrfm inputs vs labels/targets",
            expected: xs.len(),
            got: labels.len().min(targets.nrows()),
        });
    }
    let (train_indices, val_indices) = split_indices(xs.len(), config.val_fraction, config.seed)?;
    let xtr: Vec<ImageTensor<T>> = train_indices.iter().map(|i| xs[*i].clone()).collect();
    let xval: Vec<ImageTensor<T>> = val_indices.iter().map(|i| xs[*i].clone()).collect();
    let ltr: Vec<usize> = train_indices.iter().map(|i| labels[*i]).collect();
    let lval: Vec<usize> = val_indices.iter().map(|i| labels[*i]).collect();
    let mut ttr = Array2::zeros((train_indices.len(), targets.ncols()));
    for (r, i) in train_indices.iter().enumerate() {
        for c in 0..targets.ncols() {
            ttr[[r, c]] = targets[[*i, c]];
        }
    }

    let patch = config.kernel.patch;
    let dim = xs[0].channels() * patch.patch_size * patch.patch_size;
    let mut m = FeatureMatrix::identity(dim);

    let mut grid = config.ridge_grid.clone();
    grid.sort_by(|a, b| a.partial_cmp(b).expect("finite ridges"));

    let mut metrics = Vec::with_capacity(config.iters);
    let mut best: Option<(f64, usize, KernelModel<T>, FeatureMatrix<T>)> = None;
    let mut first_model: Option<KernelModel<T>> = None;

    for iteration in 1..=config.iters {
        let prepared = PreparedKernel::new(&xtr, &m, &config.kernel)?;
        let val_cross = prepared.cross_normalized(&xval)?;
        let mut chosen: Option<(f64, T, KernelModel<T>)> = None;
        for ridge in &grid {
            let model = prepared.solve(&ttr.view(), *ridge)?;
            let val_scores = val_cross.dot(&model.alpha().t());
            let val_acc = accuracy(&val_scores.view(), &lval);
            // Strict improvement keeps the smallest ridge on ties.
            if chosen.as_ref().map_or(true, |(acc, ..)| val_acc > *acc) {
                chosen = Some((val_acc, *ridge, model));
            }
        }
        let (val_acc, lambda, model) = chosen.expect("nonempty ridge grid");
        let train_scores = prepared.gram_normalized().dot(&model.alpha().t());
        let train_acc = accuracy(&train_scores.view(), &ltr);

        // The round's product: patch-AGOP of its best model, used as the next
        // kernel feature matrix and as this round's learned-M candidate.
        let agop = compute_agop(&model, &xtr)?;
        let learned = matrix_power(&agop, config.agop_exponent)?;

        let eig = sym_eigen(&learned.view())?;
        metrics.push(IterationMetrics {
            iteration,
            lambda,
            train_acc,
            val_acc,
            trace: learned.trace(),
            top_eigenvalues: eig
                .values
                .iter()
                .take(METRICS_TOP_EIGENVALUES)
                .copied()
                .collect(),
        });
        if iteration == 1 {
            first_model = Some(model.clone());
        }
        // Strict improvement keeps the earliest round on ties.
        if best.as_ref().map_or(true, |(acc, ..)| val_acc > *acc) {
            best = Some((val_acc, iteration, model, learned.clone()));
        }
        m = learned;
    }

    let (_, best_iteration, model, feature_matrix) = best.expect("at least one round");
    Ok(RfmOutcome {
        model,
        feature_matrix,
        metrics,
        best_iteration,
        first_model: first_model.expect("round 1 always recorded"),
        train_indices,
        val_indices,
    })
}
