//! Layerwise Deep ConvRFM: per-layer ConvRFM runs, filter sampling from
//! `N(0, M)`, and a random-feature forward transform between layers.
//!
//! Layer `l` runs the ConvRFM loop on the current representation with kernel
//! depth `base - l + 1`, samples `k` filters with covariance its learned M
//! (standard normals multiplied by `M^{1/2}`), and pushes every image through
//! a valid stride-1 convolution with elementwise ReLU. No bias, and no
//! `1/sqrt(k)` scale — the kernel-max normalization in the regression solver
//! absorbs it. Nothing is sampled after the last layer; its kernel model is
//! the predictor.

use ndarray::Array2;
use rayon::prelude::*;
use std::path::Path;

use crate::agop::matrix_sqrt;
use crate::container::{ContainerReader, ContainerWriter};
use crate::error::{Error, Result};
use crate::feature::FeatureMatrix;
use crate::regression::KernelModel;
use crate::rfm::{run_convrfm, IterationMetrics, RfmConfig};
use crate::scalar::Scalar;
use crate::seeds::{derive_seed, rng_for};
use crate::tensor::{extract_patches, ImageTensor, PatchSpec};

pub const DEFAULT_FILTERS: usize = 64;

/// Elementwise nonlinearity applied after the filter convolution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, v: T) -> T {
        match self {
            Activation::Relu => v.max(T::zero()),
            Activation::Identity => v,
        }
    }
}

/// Draws `k` filters with covariance `M`: standard-normal rows times
/// `M^{1/2}`, so the empirical covariance converges to `M`.
pub fn sample_filters<T: Scalar>(
    m: &FeatureMatrix<T>,
    k: usize,
    seed: u64,
) -> Result<Array2<T>> {
    if k == 0 {
        return Err(Error::InvalidArgument(
            "filter count must be at least 1".into(),
        ));
    }
    let root = matrix_sqrt(m)?;
    let mut rng = rng_for(seed, "deep-filter-sample");
    let z = Array2::from_shape_fn((k, m.dim()), |_| T::standard_normal(&mut rng));
    // Row i is (B z_i)^T = z_i^T B for symmetric B.
    Ok(z.dot(root.entries()))
}

/// Valid (unpadded) stride-1 convolution of each filter row over each image,
/// followed by the elementwise nonlinearity. Output channels = filter count;
/// the filter length must be `channels * q^2` for an integer window size `q`.
pub fn forward_layer<T: Scalar>(
    xs: &[ImageTensor<T>],
    filters: &Array2<T>,
    activation: Activation,
) -> Result<Vec<ImageTensor<T>>> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("forward_layer image list"));
    }
    let channels = xs[0].channels();
    let d = filters.ncols();
    if filters.nrows() == 0 {
        return Err(Error::EmptyInput("forward_layer filter bank"));
    }
    if d == 0 || d % channels != 0 {
        return Err(Error::DimensionMismatch {
            context: "filter length vs image channels",
            expected: channels,
            got: d,
        });
    }
    let q2 = d / channels;
    let q = (q2 as f64).sqrt().round() as usize;
    if q * q != q2 {
        return Err(Error::InvalidArgument(format!(
            "filter length {d} over {channels} channels is not a square window"
        )));
    }
    let spec = PatchSpec::new(q, 1, 0)?;
    xs.par_iter()
        .map(|x| {
            let grid = extract_patches(x, &spec)?;
            let response = grid.rows().dot(&filters.t());
            let (gh, gw) = (grid.grid_height(), grid.grid_width());
            let k = filters.nrows();
            let mut data = vec![T::zero(); k * gh * gw];
            for u in 0..gh * gw {
                for f in 0..k {
                    data[f * gh * gw + u] = activation.apply(response[[u, f]]);
                }
            }
            ImageTensor::new(k, gh, gw, data)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct DeepConfig<T> {
    /// Number of layers `L`.
    pub depth: usize,
    /// Filters sampled per non-final layer.
    pub filters: usize,
    /// Template for each layer's ConvRFM run; its kernel depth is the base
    /// depth at layer 1 and shrinks by one per layer.
    pub rfm: RfmConfig<T>,
    /// Kernel patch stride per layer (window size and padding follow the
    /// template spec).
    pub layer_strides: Vec<usize>,
}

impl<T: Scalar> DeepConfig<T> {
    pub fn new(depth: usize, rfm: RfmConfig<T>) -> Self {
        let stride = rfm.kernel.patch.stride;
        Self {
            depth,
            filters: DEFAULT_FILTERS,
            rfm,
            layer_strides: vec![stride; depth],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(Error::InvalidArgument("depth must be at least 1".into()));
        }
        if self.filters == 0 {
            return Err(Error::InvalidArgument(
                "filter count must be at least 1".into(),
            ));
        }
        if self.rfm.kernel.depth < self.depth {
            return Err(Error::InvalidArgument(format!(
                "kernel depth {} underflows across {} layers",
                self.rfm.kernel.depth, self.depth
            )));
        }
        if self.layer_strides.len() != self.depth {
            return Err(Error::DimensionMismatch {
                context: "layer stride list",
                expected: self.depth,
                got: self.layer_strides.len(),
            });
        }
        if self.layer_strides.iter().any(|s| *s == 0) {
            return Err(Error::InvalidArgument("strides must be positive".into()));
        }
        self.rfm.validate()
    }
}

/// What one layer learned: its feature matrix, sampled filters (absent on the
/// final layer), and the ConvRFM metrics of its run.
pub struct DeepLayerRecord<T> {
    pub layer: usize,
    pub feature_matrix: FeatureMatrix<T>,
    pub filters: Option<Array2<T>>,
    pub metrics: Vec<IterationMetrics<T>>,
    pub best_iteration: usize,
}

pub struct DeepOutcome<T> {
    pub layers: Vec<DeepLayerRecord<T>>,
    /// Final layer's kernel model; queries must pass through [`DeepOutcome::transform`].
    pub model: KernelModel<T>,
}

impl<T: Scalar> DeepOutcome<T> {
    /// Pushes images through every stored filter bank.
    pub fn transform(&self, xs: &[ImageTensor<T>]) -> Result<Vec<ImageTensor<T>>> {
        let mut current = xs.to_vec();
        for layer in &self.layers {
            if let Some(w) = &layer.filters {
                current = forward_layer(&current, w, Activation::Relu)?;
            }
        }
        Ok(current)
    }

    pub fn predict(&self, x: &ImageTensor<T>) -> Result<Vec<T>> {
        let rep = self.transform(std::slice::from_ref(x))?;
        self.model.predict(&rep[0])
    }

    pub fn predict_batch(&self, xs: &[ImageTensor<T>]) -> Result<Array2<T>> {
        let rep = self.transform(xs)?;
        self.model.predict_batch(&rep)
    }
}

/// Runs the layerwise scheme on class labels.
pub fn run_deep_convrfm<T: Scalar>(
    xs: &[ImageTensor<T>],
    labels: &[usize],
    classes: usize,
    config: &DeepConfig<T>,
) -> Result<DeepOutcome<T>> {
    config.validate()?;
    let mut current = xs.to_vec();
    let mut layers = Vec::with_capacity(config.depth);
    let mut model = None;
    for layer in 1..=config.depth {
        let mut rfm = config.rfm.clone();
        // One less kernel composition per layer down the stack.
        rfm.kernel = rfm
            .kernel
            .with_depth(config.rfm.kernel.depth - layer + 1)?;
        rfm.kernel.patch = PatchSpec::new(
            config.rfm.kernel.patch.patch_size,
            config.layer_strides[layer - 1],
            config.rfm.kernel.patch.padding,
        )?;
        let out = run_convrfm(&current, labels, classes, &rfm)?;
        let filters = if layer < config.depth {
            let seed = derive_seed(config.rfm.seed, &format!("deep-filters-layer-{layer}"));
            let w = sample_filters(&out.feature_matrix, config.filters, seed)?;
            current = forward_layer(&current, &w, Activation::Relu)?;
            Some(w)
        } else {
            None
        };
        layers.push(DeepLayerRecord {
            layer,
            feature_matrix: out.feature_matrix,
            filters,
            metrics: out.metrics,
            best_iteration: out.best_iteration,
        });
        model = Some(out.model);
    }
    Ok(DeepOutcome {
        layers,
        model: model.expect("at least one layer"),
    })
}

const FILTER_BANK_MAGIC: [u8; 4] = *b"CNFB";

/// Writes a `k x dim` filter bank: header (magic, version, k, dim) then the
/// filters row-major as little-endian doubles.
pub fn write_filter_bank<T: Scalar>(path: &Path, filters: &Array2<T>) -> Result<()> {
    let mut out = ContainerWriter::create(path)?;
    out.write_header(
        FILTER_BANK_MAGIC,
        filters.nrows() as u32,
        filters.ncols() as u32,
    )?;
    out.write_f64_iter(filters.iter().copied())?;
    out.finish()
}

/// Reads a filter bank written by [`write_filter_bank`].
pub fn read_filter_bank<T: Scalar>(path: &Path) -> Result<Array2<T>> {
    let mut r = ContainerReader::open(path)?;
    let (raw_k, raw_dim) = r.read_header(FILTER_BANK_MAGIC)?;
    let k = r.check_extent("filter count", u64::from(raw_k))? as usize;
    let dim = r.check_extent("filter dimension", u64::from(raw_dim))? as usize;
    let data = r.read_f64_vec::<T>(k * dim)?;
    r.expect_eof()?;
    let bank = Array2::from_shape_vec((k, dim), data)
        .expect("vector length matches the declared shape");
    for v in &bank {
        if !v.is_finite() {
            return Err(r.fail("non-finite filter entry"));
        }
    }
    Ok(bank)
}
