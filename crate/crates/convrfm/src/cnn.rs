//! A minimal convolutional network with hand-written forward and backward
//! passes.
//!
//! The network is a chain of bias-free convolutional layers (stride 1, valid
//! or zero-padded), each followed by an elementwise nonlinearity and an
//! optional 2x2 pooling stage, closed by a single fully connected readout.
//! Everything is explicit: the backward pass produces, besides weight
//! gradients, the per-position gradients of the output with respect to each
//! layer's input patches — the raw material for the network's patch-AGOP and
//! for checking that trained filter Gram matrices `W^T W` align with it.

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::agop::{compute_agop, proportionality_residual, similarity, SimilarityReport};
use crate::container::{ContainerReader, ContainerWriter};
use crate::error::{Error, Result};
use crate::feature::FeatureMatrix;
use crate::rfm::{accuracy, encode_targets};
use crate::scalar::Scalar;
use crate::seeds::rng_for;
use crate::tensor::{extract_patches, scatter_patches, ImageTensor, PatchGrid, PatchSpec};
use crate::PatchGradientSource;
use std::path::Path;

/// Initialization scale of the first convolutional layer.
pub const FIRST_LAYER_INIT_STD: f64 = 5e-3;
/// Initialization scale of every later layer and the readout.
pub const LATER_LAYER_INIT_STD: f64 = 1e-2;
/// Pooling window edge (stride equals the window).
const POOL_WINDOW: usize = 2;

const CNN_MAGIC: [u8; 4] = *b"CNNW";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CnnActivation {
    Relu,
    Tanh,
    Identity,
}

impl CnnActivation {
    #[inline]
    pub fn apply<T: Scalar>(self, z: T) -> T {
        match self {
            CnnActivation::Relu => z.max(T::zero()),
            CnnActivation::Tanh => z.tanh(),
            CnnActivation::Identity => z,
        }
    }

    /// Derivative at the preactivation (ReLU takes 0 at the kink).
    #[inline]
    pub fn derivative<T: Scalar>(self, z: T) -> T {
        match self {
            CnnActivation::Relu => {
                if z > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            CnnActivation::Tanh => {
                let t = z.tanh();
                T::one() - t * t
            }
            CnnActivation::Identity => T::one(),
        }
    }

    fn code(self) -> u32 {
        match self {
            CnnActivation::Relu => 0,
            CnnActivation::Tanh => 1,
            CnnActivation::Identity => 2,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(CnnActivation::Relu),
            1 => Some(CnnActivation::Tanh),
            2 => Some(CnnActivation::Identity),
            _ => None,
        }
    }
}

/// 2x2 stride-2 pooling regime after the nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    None,
    Max,
    Average,
}

impl Pooling {
    fn code(self) -> u32 {
        match self {
            Pooling::None => 0,
            Pooling::Max => 1,
            Pooling::Average => 2,
        }
    }

    fn from_code(code: u32) -> Option<Self> {
        match code {
            0 => Some(Pooling::None),
            1 => Some(Pooling::Max),
            2 => Some(Pooling::Average),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvLayerSpec {
    pub filters: usize,
    pub patch_size: usize,
    pub padding: usize,
    pub activation: CnnActivation,
    pub pooling: Pooling,
}

impl ConvLayerSpec {
    pub fn new(filters: usize, patch_size: usize) -> Self {
        Self {
            filters,
            patch_size,
            padding: 0,
            activation: CnnActivation::Relu,
            pooling: Pooling::None,
        }
    }

    pub fn with_activation(mut self, activation: CnnActivation) -> Self {
        self.activation = activation;
        self
    }

    pub fn with_pooling(mut self, pooling: Pooling) -> Self {
        self.pooling = pooling;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    fn patch_spec(&self) -> Result<PatchSpec> {
        PatchSpec::new(self.patch_size, 1, self.padding)
    }
}

#[derive(Debug, Clone)]
pub struct ConvLayer<T> {
    spec: ConvLayerSpec,
    /// filters x (in_channels * q^2), rows flattened channel-major like patches.
    weights: Array2<T>,
    in_shape: (usize, usize, usize),
    conv_shape: (usize, usize, usize),
    out_shape: (usize, usize, usize),
}

impl<T: Scalar> ConvLayer<T> {
    pub fn spec(&self) -> &ConvLayerSpec {
        &self.spec
    }

    pub fn weights(&self) -> &Array2<T> {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut Array2<T> {
        &mut self.weights
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.in_shape
    }

    pub fn output_shape(&self) -> (usize, usize, usize) {
        self.out_shape
    }
}

fn pooled_dims(pooling: Pooling, h: usize, w: usize) -> Result<(usize, usize)> {
    match pooling {
        Pooling::None => Ok((h, w)),
        Pooling::Max | Pooling::Average => {
            if h < POOL_WINDOW || w < POOL_WINDOW {
                return Err(Error::ShapeMismatch(format!(
                    "pooling needs at least a {POOL_WINDOW}x{POOL_WINDOW} map, got {h}x{w}"
                )));
            }
            Ok((h / POOL_WINDOW, w / POOL_WINDOW))
        }
    }
}

#[derive(Debug, Clone)]
pub struct MiniCnn<T> {
    input_shape: (usize, usize, usize),
    layers: Vec<ConvLayer<T>>,
    /// outputs x flattened-final-map readout, no bias.
    head: Array2<T>,
}

impl<T: Scalar> MiniCnn<T> {
    /// Builds the chain with seeded Gaussian weights: the first layer at
    /// standard deviation 5e-3, every later layer and the readout at 1e-2.
    pub fn new(
        input_shape: (usize, usize, usize),
        specs: &[ConvLayerSpec],
        outputs: usize,
        seed: u64,
    ) -> Result<Self> {
        let shapes = Self::chain_shapes(input_shape, specs)?;
        if outputs == 0 {
            return Err(Error::InvalidArgument("network needs outputs".into()));
        }
        let mut layers = Vec::with_capacity(specs.len());
        for (i, (spec, (in_shape, conv_shape, out_shape))) in
            specs.iter().zip(shapes.iter()).enumerate()
        {
            let std = if i == 0 {
                FIRST_LAYER_INIT_STD
            } else {
                LATER_LAYER_INIT_STD
            };
            let std = T::from_f64(std);
            let dim = in_shape.0 * spec.patch_size * spec.patch_size;
            let mut rng = rng_for(seed, &format!("cnn-init-layer-{i}"));
            let weights =
                Array2::from_shape_fn((spec.filters, dim), |_| T::standard_normal(&mut rng) * std);
            layers.push(ConvLayer {
                spec: *spec,
                weights,
                in_shape: *in_shape,
                conv_shape: *conv_shape,
                out_shape: *out_shape,
            });
        }
        let (fc, fh, fw) = shapes
            .last()
            .map(|(_, _, out)| *out)
            .unwrap_or(input_shape);
        let flat = fc * fh * fw;
        let std = T::from_f64(LATER_LAYER_INIT_STD);
        let mut rng = rng_for(seed, "cnn-init-head");
        let head = Array2::from_shape_fn((outputs, flat), |_| T::standard_normal(&mut rng) * std);
        Ok(Self {
            input_shape,
            layers,
            head,
        })
    }

    /// Rebuilds a network from explicit weights, revalidating the shape chain.
    pub fn from_parts(
        input_shape: (usize, usize, usize),
        specs: &[ConvLayerSpec],
        weights: Vec<Array2<T>>,
        head: Array2<T>,
    ) -> Result<Self> {
        if specs.len() != weights.len() {
            return Err(Error::DimensionMismatch {
                context: "layer spec vs weight count",
                expected: specs.len(),
                got: weights.len(),
            });
        }
        let shapes = Self::chain_shapes(input_shape, specs)?;
        let mut layers = Vec::with_capacity(specs.len());
        for ((spec, (in_shape, conv_shape, out_shape)), w) in
            specs.iter().zip(shapes.iter()).zip(weights)
        {
            let dim = in_shape.0 * spec.patch_size * spec.patch_size;
            if w.nrows() != spec.filters || w.ncols() != dim {
                return Err(Error::ShapeMismatch(format!(
                    "layer weights must be {}x{dim}, got {}x{}",
                    spec.filters,
                    w.nrows(),
                    w.ncols()
                )));
            }
            layers.push(ConvLayer {
                spec: *spec,
                weights: w,
                in_shape: *in_shape,
                conv_shape: *conv_shape,
                out_shape: *out_shape,
            });
        }
        let (fc, fh, fw) = shapes
            .last()
            .map(|(_, _, out)| *out)
            .unwrap_or(input_shape);
        let flat = fc * fh * fw;
        if head.ncols() != flat || head.nrows() == 0 {
            return Err(Error::ShapeMismatch(format!(
                "readout must have {flat} columns, got {}x{}",
                head.nrows(),
                head.ncols()
            )));
        }
        Ok(Self {
            input_shape,
            layers,
            head,
        })
    }

    fn chain_shapes(
        input: (usize, usize, usize),
        specs: &[ConvLayerSpec],
    ) -> Result<ChainShapes> {
        let (c, h, w) = input;
        if c == 0 || h == 0 || w == 0 {
            return Err(Error::InvalidArgument(
                "input shape must be positive in every axis".into(),
            ));
        }
        let mut shapes = Vec::with_capacity(specs.len());
        let mut cur = input;
        for spec in specs {
            if spec.filters == 0 {
                return Err(Error::InvalidArgument("layer needs filters".into()));
            }
            let patch = spec.patch_spec()?;
            let (gh, gw) = patch.grid_dims(cur.1, cur.2)?;
            let conv = (spec.filters, gh, gw);
            let (ph, pw) = pooled_dims(spec.pooling, gh, gw)?;
            let out = (spec.filters, ph, pw);
            shapes.push((cur, conv, out));
            cur = out;
        }
        Ok(shapes)
    }

    pub fn input_shape(&self) -> (usize, usize, usize) {
        self.input_shape
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, l: usize) -> Result<&ConvLayer<T>> {
        self.layers
            .get(l)
            .ok_or_else(|| Error::InvalidArgument(format!("no layer {l}")))
    }

    pub fn layers(&self) -> &[ConvLayer<T>] {
        &self.layers
    }

    pub fn layer_weights_mut(&mut self, l: usize) -> Result<&mut Array2<T>> {
        self.layers
            .get_mut(l)
            .map(|layer| &mut layer.weights)
            .ok_or_else(|| Error::InvalidArgument(format!("no layer {l}")))
    }

    pub fn head(&self) -> &Array2<T> {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Array2<T> {
        &mut self.head
    }

    pub fn outputs(&self) -> usize {
        self.head.nrows()
    }

    fn check_input(&self, x: &ImageTensor<T>) -> Result<()> {
        if x.shape() != self.input_shape {
            return Err(Error::ShapeMismatch(format!(
                "network expects input {:?}, got {:?}",
                self.input_shape,
                x.shape()
            )));
        }
        Ok(())
    }

    /// Full forward pass; the cache keeps every intermediate map for the
    /// backward pass and for patch gradients.
    pub fn forward(&self, x: &ImageTensor<T>) -> Result<(Vec<T>, ForwardCache<T>)> {
        self.check_input(x)?;
        let n_layers = self.layers.len();
        let mut cache = ForwardCache {
            inputs: Vec::with_capacity(n_layers),
            preacts: Vec::with_capacity(n_layers),
            activated: Vec::with_capacity(n_layers),
            hidden: Vec::with_capacity(n_layers),
            output: Vec::new(),
        };
        let mut cur = x.clone();
        for layer in &self.layers {
            let patch = layer.spec.patch_spec()?;
            let grid = extract_patches(&cur, &patch)?;
            let z = grid.rows().dot(&layer.weights.t());
            let (f, gh, gw) = layer.conv_shape;
            let positions = gh * gw;
            let mut pre = vec![T::zero(); f * positions];
            for u in 0..positions {
                for fi in 0..f {
                    pre[fi * positions + u] = z[[u, fi]];
                }
            }
            let preact = ImageTensor::new(f, gh, gw, pre)?;
            let act = layer.spec.activation;
            let activated = preact.map(|v| act.apply(v));
            let pooled = pool_forward(&activated, layer.spec.pooling)?;
            cache.inputs.push(cur);
            cache.preacts.push(preact);
            cache.activated.push(activated);
            cache.hidden.push(pooled.clone());
            cur = pooled;
        }
        let flat = cur.as_slice();
        if flat.len() != self.head.ncols() {
            return Err(Error::DimensionMismatch {
                context: "readout input",
                expected: self.head.ncols(),
                got: flat.len(),
            });
        }
        let flat_arr = Array1::from_vec(flat.to_vec());
        let logits = self.head.dot(&flat_arr);
        cache.output = logits.to_vec();
        Ok((cache.output.clone(), cache))
    }

    /// Output vector without keeping the cache.
    pub fn predict(&self, x: &ImageTensor<T>) -> Result<Vec<T>> {
        Ok(self.forward(x)?.0)
    }

    /// Scores for many samples, one row each.
    pub fn predict_batch(&self, xs: &[ImageTensor<T>]) -> Result<Array2<T>> {
        if xs.is_empty() {
            return Err(Error::EmptyInput("predict_batch sample list"));
        }
        let rows: Vec<Vec<T>> = xs
            .par_iter()
            .map(|x| self.predict(x))
            .collect::<Result<_>>()?;
        let mut scores = Array2::<T>::zeros((xs.len(), self.outputs()));
        for (i, row) in rows.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                scores[[i, j]] = *v;
            }
        }
        Ok(scores)
    }

    /// Exact reverse-mode pass from a gradient at the output. Returns weight
    /// gradients and, for every layer, the gradient with respect to each of
    /// its input patches (before overlaps are folded together).
    pub fn backward(&self, cache: &ForwardCache<T>, loss_grad: &[T]) -> Result<Gradients<T>> {
        if loss_grad.len() != self.outputs() {
            return Err(Error::DimensionMismatch {
                context: "output gradient length",
                expected: self.outputs(),
                got: loss_grad.len(),
            });
        }
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::ShapeMismatch(
                "forward cache does not match the network depth".into(),
            ));
        }
        let lg = Array1::from_vec(loss_grad.to_vec());
        let last = cache
            .hidden
            .last()
            .cloned()
            .unwrap_or_else(|| cache_input_fallback(cache));
        let flat = Array1::from_vec(last.as_slice().to_vec());
        let head_grad = outer(&lg, &flat);
        let g_flat = self.head.t().dot(&lg);
        let (lc, lh, lw) = last.shape();
        let mut g_hidden = ImageTensor::new(lc, lh, lw, g_flat.to_vec())?;

        let mut weight_grads: Vec<Array2<T>> = Vec::with_capacity(self.layers.len());
        let mut patch_grads: Vec<PatchGrid<T>> = Vec::with_capacity(self.layers.len());
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let g_act = pool_backward(
                &g_hidden,
                &cache.activated[l],
                layer.spec.pooling,
            )?;
            let (f, gh, gw) = layer.conv_shape;
            let positions = gh * gw;
            let preact = &cache.preacts[l];
            let act = layer.spec.activation;
            // dL/dz as an im2col-shaped matrix (positions x filters).
            let mut g_pre = Array2::<T>::zeros((positions, f));
            let ga = g_act.as_slice();
            let pz = preact.as_slice();
            for fi in 0..f {
                for u in 0..positions {
                    let idx = fi * positions + u;
                    g_pre[[u, fi]] = ga[idx] * act.derivative(pz[idx]);
                }
            }
            let patch = layer.spec.patch_spec()?;
            let grid = extract_patches(&cache.inputs[l], &patch)?;
            weight_grads.push(g_pre.t().dot(grid.rows()));
            let rows = g_pre.dot(&layer.weights);
            let grad_grid = PatchGrid::new(
                layer.in_shape.0,
                layer.spec.patch_size,
                gh,
                gw,
                rows,
            )?;
            g_hidden = scatter_patches(&grad_grid, &patch, layer.in_shape.1, layer.in_shape.2)?;
            patch_grads.push(grad_grid);
        }
        weight_grads.reverse();
        patch_grads.reverse();
        Ok(Gradients {
            head: head_grad,
            weights: weight_grads,
            patch_inputs: patch_grads,
        })
    }
}

type ChainShapes = Vec<(
    (usize, usize, usize),
    (usize, usize, usize),
    (usize, usize, usize),
)>;

fn cache_input_fallback<T: Scalar>(cache: &ForwardCache<T>) -> ImageTensor<T> {
    cache
        .inputs
        .first()
        .cloned()
        .expect("forward cache always holds the input")
}

fn outer<T: Scalar>(a: &Array1<T>, b: &Array1<T>) -> Array2<T> {
    let mut out = Array2::<T>::zeros((a.len(), b.len()));
    for i in 0..a.len() {
        for j in 0..b.len() {
            out[[i, j]] = a[i] * b[j];
        }
    }
    out
}

/// Every intermediate map of one forward pass: `inputs[l]` feeds layer `l`,
/// `preacts`/`activated` sit before and after its nonlinearity, `hidden[l]`
/// is its pooled output.
pub struct ForwardCache<T> {
    pub inputs: Vec<ImageTensor<T>>,
    pub preacts: Vec<ImageTensor<T>>,
    pub activated: Vec<ImageTensor<T>>,
    pub hidden: Vec<ImageTensor<T>>,
    pub output: Vec<T>,
}

/// Reverse-mode results: readout and per-layer weight gradients plus the
/// per-patch input gradients of every layer (position-indexed, unfolded).
pub struct Gradients<T> {
    pub head: Array2<T>,
    pub weights: Vec<Array2<T>>,
    pub patch_inputs: Vec<PatchGrid<T>>,
}

fn pool_forward<T: Scalar>(x: &ImageTensor<T>, pooling: Pooling) -> Result<ImageTensor<T>> {
    let (c, h, w) = x.shape();
    match pooling {
        Pooling::None => Ok(x.clone()),
        Pooling::Max => {
            let (ph, pw) = pooled_dims(pooling, h, w)?;
            Ok(ImageTensor::from_fn(c, ph, pw, |ci, oy, ox| {
                let mut best = x.get(ci, oy * 2, ox * 2);
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let v = x.get(ci, oy * 2 + dy, ox * 2 + dx);
                    if v > best {
                        best = v;
                    }
                }
                best
            }))
        }
        Pooling::Average => {
            let (ph, pw) = pooled_dims(pooling, h, w)?;
            let quarter = T::from_f64(0.25);
            Ok(ImageTensor::from_fn(c, ph, pw, |ci, oy, ox| {
                let mut acc = T::zero();
                for dy in 0..2 {
                    for dx in 0..2 {
                        acc += x.get(ci, oy * 2 + dy, ox * 2 + dx);
                    }
                }
                acc * quarter
            }))
        }
    }
}

/// Routes pooled gradients back to the pre-pool map. Max pooling sends each
/// cell's gradient to the first maximal entry of its window (matching the
/// forward scan order); average pooling spreads it evenly.
fn pool_backward<T: Scalar>(
    g_out: &ImageTensor<T>,
    activated: &ImageTensor<T>,
    pooling: Pooling,
) -> Result<ImageTensor<T>> {
    let (c, h, w) = activated.shape();
    match pooling {
        Pooling::None => Ok(g_out.clone()),
        Pooling::Max => {
            let (pc, ph, pw) = g_out.shape();
            if pc != c {
                return Err(Error::ShapeMismatch("pool gradient channels".into()));
            }
            let mut g = ImageTensor::zeros(c, h, w);
            for ci in 0..c {
                for oy in 0..ph {
                    for ox in 0..pw {
                        let (mut by, mut bx) = (oy * 2, ox * 2);
                        let mut best = activated.get(ci, by, bx);
                        for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                            let v = activated.get(ci, oy * 2 + dy, ox * 2 + dx);
                            if v > best {
                                best = v;
                                by = oy * 2 + dy;
                                bx = ox * 2 + dx;
                            }
                        }
                        let cur = g.get(ci, by, bx) + g_out.get(ci, oy, ox);
                        g.set(ci, by, bx, cur);
                    }
                }
            }
            Ok(g)
        }
        Pooling::Average => {
            let (pc, ph, pw) = g_out.shape();
            if pc != c {
                return Err(Error::ShapeMismatch("pool gradient channels".into()));
            }
            let quarter = T::from_f64(0.25);
            let mut g = ImageTensor::zeros(c, h, w);
            for ci in 0..c {
                for oy in 0..ph {
                    for ox in 0..pw {
                        let share = g_out.get(ci, oy, ox) * quarter;
                        for dy in 0..2 {
                            for dx in 0..2 {
                                let cur = g.get(ci, oy * 2 + dy, ox * 2 + dx) + share;
                                g.set(ci, oy * 2 + dy, ox * 2 + dx, cur);
                            }
                        }
                    }
                }
            }
            Ok(g)
        }
    }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Optimizer {
    Sgd,
    Adam,
}

#[derive(Debug, Clone)]
pub struct TrainConfig<T> {
    pub optimizer: Optimizer,
    pub epochs: usize,
    pub lr: T,
    pub batch_size: usize,
    pub seed: u64,
}

impl<T: Scalar> TrainConfig<T> {
    /// Adam at learning rate 1e-4, batch 128, 25 epochs.
    pub fn adam(seed: u64) -> Self {
        Self {
            optimizer: Optimizer::Adam,
            epochs: 25,
            lr: T::from_f64(1e-4),
            batch_size: 128,
            seed,
        }
    }

    /// Plain SGD at learning rate 1e-1, batch 128, 25 epochs.
    pub fn sgd(seed: u64) -> Self {
        Self {
            optimizer: Optimizer::Sgd,
            epochs: 25,
            lr: T::from_f64(1e-1),
            batch_size: 128,
            seed,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be positive".into()));
        }
        if !(self.lr >= T::zero()) || !self.lr.is_finite() {
            return Err(Error::InvalidArgument(
                "learning rate must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochMetrics<T> {
    pub epoch: usize,
    pub train_loss: T,
    pub train_accuracy: f64,
    pub val_accuracy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport<T> {
    pub epochs: Vec<EpochMetrics<T>>,
    /// 1-based epoch with the best selection accuracy (validation when
    /// available, training otherwise); earliest on ties.
    pub best_epoch: usize,
    pub best_accuracy: f64,
}

struct AdamState<T> {
    t: i32,
    moments: Vec<(Array2<T>, Array2<T>)>,
}

/// Minibatch training with mean-squared loss on the encoded class targets
/// (single ±1 column for two classes, one-hot otherwise). Deterministic under
/// the config seed; per-sample passes run in parallel with an ordered
/// reduction.
pub fn train<T: Scalar>(
    net: &mut MiniCnn<T>,
    xs: &[ImageTensor<T>],
    labels: &[usize],
    classes: usize,
    val: Option<(&[ImageTensor<T>], &[usize])>,
    config: &TrainConfig<T>,
) -> Result<TrainReport<T>> {
    config.validate()?;
    if xs.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    if xs.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            context: "training labels",
            expected: xs.len(),
            got: labels.len(),
        });
    }
    let targets = encode_targets::<T>(labels, classes)?;
    if targets.ncols() != net.outputs() {
        return Err(Error::DimensionMismatch {
            context: "encoded target width vs network outputs",
            expected: net.outputs(),
            got: targets.ncols(),
        });
    }
    if let Some((vx, vl)) = val {
        if vx.len() != vl.len() {
            return Err(Error::DimensionMismatch {
                context: "validation labels",
                expected: vx.len(),
                got: vl.len(),
            });
        }
    }
    let n = xs.len();
    let mut adam = match config.optimizer {
        Optimizer::Adam => Some(AdamState {
            t: 0,
            moments: param_shapes(net)
                .into_iter()
                .map(|(r, c)| (Array2::zeros((r, c)), Array2::zeros((r, c))))
                .collect(),
        }),
        Optimizer::Sgd => None,
    };
    let mut report = TrainReport {
        epochs: Vec::with_capacity(config.epochs),
        best_epoch: 0,
        best_accuracy: f64::NEG_INFINITY,
    };
    for epoch in 1..=config.epochs {
        let mut order: Vec<usize> = (0..n).collect();
        let mut rng = rng_for(config.seed, &format!("cnn-shuffle-epoch-{epoch}"));
        order.shuffle(&mut rng);
        let mut loss_sum = T::zero();
        for chunk in order.chunks(config.batch_size) {
            let batch: Vec<(T, Array2<T>, Vec<Array2<T>>)> = chunk
                .par_iter()
                .map(|&i| {
                    let (out, cache) = net.forward(&xs[i])?;
                    let mut diff = vec![T::zero(); out.len()];
                    let mut loss = T::zero();
                    for (k, d) in diff.iter_mut().enumerate() {
                        *d = out[k] - targets[[i, k]];
                        loss += *d * *d;
                    }
                    loss = loss * T::from_f64(0.5);
                    let grads = net.backward(&cache, &diff)?;
                    Ok((loss, grads.head, grads.weights))
                })
                .collect::<Result<_>>()?;
            let scale = T::one() / T::from_usize(chunk.len());
            let mut head_acc = Array2::<T>::zeros(net.head.dim());
            let mut weight_acc: Vec<Array2<T>> = net
                .layers
                .iter()
                .map(|l| Array2::zeros(l.weights.dim()))
                .collect();
            for (loss, head, weights) in batch {
                loss_sum += loss;
                head_acc += &head;
                for (acc, g) in weight_acc.iter_mut().zip(weights.iter()) {
                    *acc += g;
                }
            }
            if !loss_sum.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            head_acc *= scale;
            for acc in &mut weight_acc {
                *acc *= scale;
            }
            apply_step(net, &head_acc, &weight_acc, config, adam.as_mut());
        }
        let train_loss = loss_sum / T::from_usize(n);
        if !train_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        let train_scores = net.predict_batch(xs)?;
        let train_accuracy = accuracy(&train_scores.view(), labels);
        let val_accuracy = match val {
            Some((vx, vl)) => {
                let scores = net.predict_batch(vx)?;
                Some(accuracy(&scores.view(), vl))
            }
            None => None,
        };
        let selection = val_accuracy.unwrap_or(train_accuracy);
        if selection > report.best_accuracy {
            report.best_accuracy = selection;
            report.best_epoch = epoch;
        }
        report.epochs.push(EpochMetrics {
            epoch,
            train_loss,
            train_accuracy,
            val_accuracy,
        });
    }
    Ok(report)
}

fn param_shapes<T: Scalar>(net: &MiniCnn<T>) -> Vec<(usize, usize)> {
    let mut shapes = vec![net.head.dim()];
    shapes.extend(net.layers.iter().map(|l| l.weights.dim()));
    shapes
}

fn apply_step<T: Scalar>(
    net: &mut MiniCnn<T>,
    head_grad: &Array2<T>,
    weight_grads: &[Array2<T>],
    config: &TrainConfig<T>,
    adam: Option<&mut AdamState<T>>,
) {
    match adam {
        None => {
            net.head.scaled_add(-config.lr, head_grad);
            for (layer, g) in net.layers.iter_mut().zip(weight_grads) {
                layer.weights.scaled_add(-config.lr, g);
            }
        }
        Some(state) => {
            state.t += 1;
            let b1 = T::from_f64(0.9);
            let b2 = T::from_f64(0.999);
            let eps = T::from_f64(1e-8);
            let c1 = T::one() - b1.powi(state.t);
            let c2 = T::one() - b2.powi(state.t);
            let update = |param: &mut Array2<T>, grad: &Array2<T>, slot: usize,
                              moments: &mut Vec<(Array2<T>, Array2<T>)>| {
                let (m, v) = &mut moments[slot];
                azip_update(m, v, param, grad, b1, b2, c1, c2, eps, config.lr);
            };
            update(&mut net.head, head_grad, 0, &mut state.moments);
            for (i, (layer, g)) in net.layers.iter_mut().zip(weight_grads).enumerate() {
                update(&mut layer.weights, g, i + 1, &mut state.moments);
            }
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn azip_update<T: Scalar>(
    m: &mut Array2<T>,
    v: &mut Array2<T>,
    param: &mut Array2<T>,
    grad: &Array2<T>,
    b1: T,
    b2: T,
    c1: T,
    c2: T,
    eps: T,
    lr: T,
) {
    let one = T::one();
    for ((mi, vi), (pi, gi)) in m
        .iter_mut()
        .zip(v.iter_mut())
        .zip(param.iter_mut().zip(grad.iter()))
    {
        *mi = b1 * *mi + (one - b1) * *gi;
        *vi = b2 * *vi + (one - b2) * *gi * *gi;
        let mhat = *mi / c1;
        let vhat = *vi / c2;
        *pi -= lr * mhat / (vhat.sqrt() + eps);
    }
}

// ---------------------------------------------------------------------------
// Feature matrices and the network AGOP
// ---------------------------------------------------------------------------

/// Filter Gram `W^T W` of layer `l`, optionally with a baseline network's
/// weights subtracted first (isolating what training added).
pub fn extract_cnfm<T: Scalar>(
    net: &MiniCnn<T>,
    layer: usize,
    baseline: Option<&MiniCnn<T>>,
) -> Result<FeatureMatrix<T>> {
    let w = &net.layer(layer)?.weights;
    let w = match baseline {
        None => w.clone(),
        Some(base) => {
            let wb = &base.layer(layer)?.weights;
            if wb.dim() != w.dim() {
                return Err(Error::ShapeMismatch(
                    "baseline network has different layer shapes".into(),
                ));
            }
            w - wb
        }
    };
    FeatureMatrix::new(w.t().dot(&w))
}

struct SummedLogitGradients<'a, T: Scalar> {
    net: &'a MiniCnn<T>,
    layer: usize,
}

impl<T: Scalar> PatchGradientSource<T> for SummedLogitGradients<'_, T> {
    fn per_output_patch_gradients(&self, x: &ImageTensor<T>) -> Result<Vec<PatchGrid<T>>> {
        let (out, cache) = self.net.forward(x)?;
        let ones = vec![T::one(); out.len()];
        let mut grads = self.net.backward(&cache, &ones)?;
        Ok(vec![grads.patch_inputs.swap_remove(self.layer)])
    }
}

/// Patch-AGOP of the network's summed-logit output with respect to layer
/// `l`'s input patches, averaged over `xs`.
pub fn compute_network_agop<T: Scalar>(
    net: &MiniCnn<T>,
    layer: usize,
    xs: &[ImageTensor<T>],
) -> Result<FeatureMatrix<T>> {
    net.layer(layer)?;
    let source = SummedLogitGradients { net, layer };
    compute_agop(&source, xs)
}

#[derive(Debug, Clone)]
pub struct AnsatzLayerReport<T> {
    pub layer: usize,
    /// Alignment between the trained filter Gram and the patch-AGOP.
    pub trained_vs_agop: SimilarityReport<T>,
    /// Control: alignment between the initial and trained filter Grams.
    pub init_vs_trained: SimilarityReport<T>,
}

/// Per-layer comparison of trained filter Grams against the network's own
/// patch-AGOP, with the initial-vs-trained Gram correlation as the control
/// statistic. `subtract_initial` removes the initialization from the trained
/// weights before forming the Gram.
pub fn verify_ansatz<T: Scalar>(
    trained: &MiniCnn<T>,
    initial: &MiniCnn<T>,
    xs: &[ImageTensor<T>],
    subtract_initial: bool,
) -> Result<Vec<AnsatzLayerReport<T>>> {
    if trained.depth() != initial.depth() {
        return Err(Error::ShapeMismatch(
            "trained and initial networks differ in depth".into(),
        ));
    }
    let mut reports = Vec::with_capacity(trained.depth());
    for l in 0..trained.depth() {
        let agop = compute_network_agop(trained, l, xs)?;
        let cnfm = if subtract_initial {
            extract_cnfm(trained, l, Some(initial))?
        } else {
            extract_cnfm(trained, l, None)?
        };
        let trained_raw = extract_cnfm(trained, l, None)?;
        let init_raw = extract_cnfm(initial, l, None)?;
        reports.push(AnsatzLayerReport {
            layer: l,
            trained_vs_agop: similarity(&cnfm, &agop)?,
            init_vs_trained: similarity(&init_raw, &trained_raw)?,
        });
    }
    Ok(reports)
}

// ---------------------------------------------------------------------------
// One-step proportionality check
// ---------------------------------------------------------------------------

/// Configuration of the one-gradient-step experiment: a patch layer
/// initialized to exactly zero under a fixed downstream readout
/// `g(z) = v^T phi(D sum_u phi(z_u))` whose structure makes every patch
/// position enter symmetrically.
#[derive(Debug, Clone)]
pub struct TheoremConfig<T> {
    pub input: (usize, usize, usize),
    pub patch_size: usize,
    /// First-layer filter count.
    pub filters: usize,
    /// Downstream hidden width.
    pub hidden: usize,
    /// Must be smooth at zero with phi(0) = 0; the precondition gate probes
    /// this numerically and rejects e.g. ReLU.
    pub activation: CnnActivation,
    pub lr: T,
    pub seed: u64,
}

impl<T: Scalar> TheoremConfig<T> {
    pub fn new(input: (usize, usize, usize), patch_size: usize, seed: u64) -> Self {
        Self {
            input,
            patch_size,
            filters: 4,
            hidden: 6,
            activation: CnnActivation::Tanh,
            lr: T::from_f64(0.5),
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TheoremVerdict<T> {
    /// Both sides nonzero; their elementwise correlation and the relative
    /// residual at the best proportionality constant.
    Proportional { pearson: T, residual: T },
    /// Zero targets: the stepped layer and the gradient outer product both
    /// vanish identically.
    BothZero,
}

struct TheoremNet<T> {
    w: Array2<T>,
    d: Array2<T>,
    v: Array1<T>,
    activation: CnnActivation,
}

impl<T: Scalar> TheoremNet<T> {
    /// f(x) and the per-position output-gradient matrix dZ (positions x filters).
    fn forward_grads(&self, patches: &Array2<T>) -> (T, Array2<T>) {
        let act = self.activation;
        let z = patches.dot(&self.w.t());
        let t1 = z.mapv(|v| act.apply(v));
        let s = t1.sum_axis(ndarray::Axis(0));
        let ds = self.d.dot(&s);
        let h = ds.mapv(|v| act.apply(v));
        let f = self.v.dot(&h);
        let r =
            Array1::from_shape_fn(self.v.len(), |i| self.v[i] * act.derivative(ds[i]));
        let dsvec = self.d.t().dot(&r);
        let dz = Array2::from_shape_fn(z.dim(), |(u, a)| dsvec[a] * act.derivative(z[[u, a]]));
        (f, dz)
    }

    /// As above plus weight-space gradients for the full-batch step.
    fn forward_full(
        &self,
        patches: &Array2<T>,
    ) -> (T, Array2<T>, Array2<T>, Array1<T>) {
        let act = self.activation;
        let z = patches.dot(&self.w.t());
        let t1 = z.mapv(|v| act.apply(v));
        let s = t1.sum_axis(ndarray::Axis(0));
        let ds = self.d.dot(&s);
        let h = ds.mapv(|v| act.apply(v));
        let f = self.v.dot(&h);
        let r =
            Array1::from_shape_fn(self.v.len(), |i| self.v[i] * act.derivative(ds[i]));
        let dsvec = self.d.t().dot(&r);
        let dz = Array2::from_shape_fn(z.dim(), |(u, a)| dsvec[a] * act.derivative(z[[u, a]]));
        let dw = dz.t().dot(patches);
        let dd = outer(&r, &s);
        (f, dw, dd, h)
    }
}

/// Evaluates the downstream readout on an explicit stack of patch responses.
fn eval_downstream<T: Scalar>(
    d: &Array2<T>,
    v: &Array1<T>,
    act: CnnActivation,
    zs: &Array2<T>,
) -> T {
    let t1 = zs.mapv(|z| act.apply(z));
    let s = t1.sum_axis(ndarray::Axis(0));
    let h = d.dot(&s).mapv(|z| act.apply(z));
    v.dot(&h)
}

/// Numeric gate for the structural assumptions: the readout must vanish at
/// zero and have one well-defined, position-independent, nonzero derivative
/// with respect to every patch response.
fn precondition_gate<T: Scalar>(
    d: &Array2<T>,
    v: &Array1<T>,
    act: CnnActivation,
    positions: usize,
    filters: usize,
) -> Result<()> {
    let g0 = eval_downstream(d, v, act, &Array2::zeros((positions, filters)));
    if g0.to_f64_lossy().abs() > 1e-10 {
        return Err(Error::AssumptionViolated(format!(
            "readout at zero is {:.3e}, not 0",
            g0.to_f64_lossy()
        )));
    }
    let h = T::from_f64(1e-5);
    let mut base: Option<Vec<T>> = None;
    for u in 0..positions {
        let mut grad = vec![T::zero(); filters];
        for (a, ga) in grad.iter_mut().enumerate() {
            let mut zs = Array2::<T>::zeros((positions, filters));
            zs[[u, a]] = h;
            let fp = (eval_downstream(d, v, act, &zs) - g0) / h;
            zs[[u, a]] = -h;
            let fm = (g0 - eval_downstream(d, v, act, &zs)) / h;
            let spread = (fp - fm).abs();
            let scale = fp.abs() + fm.abs();
            if spread.to_f64_lossy() > 0.01 * scale.to_f64_lossy() + 1e-8 {
                return Err(Error::AssumptionViolated(format!(
                    "readout derivative at zero is one-sided (slopes {:.4e} vs {:.4e}); \
                     the activation is not differentiable there",
                    fp.to_f64_lossy(),
                    fm.to_f64_lossy()
                )));
            }
            *ga = (fp + fm) * T::from_f64(0.5);
        }
        match &base {
            None => {
                let norm: f64 = grad
                    .iter()
                    .map(|g| g.to_f64_lossy() * g.to_f64_lossy())
                    .sum::<f64>()
                    .sqrt();
                if norm < 1e-8 {
                    return Err(Error::AssumptionViolated(
                        "readout derivative at zero vanishes".into(),
                    ));
                }
                base = Some(grad);
            }
            Some(b) => {
                let diff: f64 = grad
                    .iter()
                    .zip(b.iter())
                    .map(|(x, y)| {
                        let d = x.to_f64_lossy() - y.to_f64_lossy();
                        d * d
                    })
                    .sum::<f64>()
                    .sqrt();
                let ref_norm: f64 = b
                    .iter()
                    .map(|g| g.to_f64_lossy() * g.to_f64_lossy())
                    .sum::<f64>()
                    .sqrt();
                if diff > 1e-6 * (ref_norm + 1.0) {
                    return Err(Error::AssumptionViolated(format!(
                        "patch derivative differs across positions by {diff:.3e}"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// One full-batch gradient-descent step from an exactly-zero patch layer,
/// then a comparison of the stepped layer's Gram `W^T W` against the summed
/// patch-gradient outer product of the stepped network at a fresh probe
/// point. Proportionality shows up as correlation 1 and residual ~0.
pub fn theorem_one_check<T: Scalar>(
    config: &TheoremConfig<T>,
    xs: &[ImageTensor<T>],
    targets: &[T],
) -> Result<TheoremVerdict<T>> {
    if xs.is_empty() {
        return Err(Error::EmptyInput("theorem sample list"));
    }
    if xs.len() != targets.len() {
        return Err(Error::DimensionMismatch {
            context: "theorem targets",
            expected: xs.len(),
            got: targets.len(),
        });
    }
    if config.filters == 0 || config.hidden == 0 {
        return Err(Error::InvalidArgument(
            "theorem network needs filters and hidden units".into(),
        ));
    }
    if !(config.lr > T::zero()) || !config.lr.is_finite() {
        return Err(Error::InvalidArgument(
            "theorem learning rate must be positive".into(),
        ));
    }
    let (c, ih, iw) = config.input;
    let patch = PatchSpec::new(config.patch_size, 1, 0)?;
    let (gh, gw) = patch.grid_dims(ih, iw)?;
    let positions = gh * gw;
    let dim = c * config.patch_size * config.patch_size;
    let mut rng_d = rng_for(config.seed, "theorem-downstream-d");
    let d = Array2::from_shape_fn((config.hidden, config.filters), |_| {
        T::standard_normal(&mut rng_d)
    });
    let mut rng_v = rng_for(config.seed, "theorem-downstream-v");
    let v = Array1::from_shape_fn(config.hidden, |_| T::standard_normal(&mut rng_v));
    precondition_gate(&d, &v, config.activation, positions, config.filters)?;

    let net = TheoremNet {
        w: Array2::zeros((config.filters, dim)),
        d,
        v,
        activation: config.activation,
    };
    let patch_stacks: Vec<Array2<T>> = xs
        .iter()
        .map(|x| {
            if x.shape() != config.input {
                return Err(Error::ShapeMismatch(format!(
                    "theorem input {:?} does not match configured {:?}",
                    x.shape(),
                    config.input
                )));
            }
            Ok(extract_patches(x, &patch)?.into_rows())
        })
        .collect::<Result<_>>()?;
    let n = T::from_usize(xs.len());
    let mut gw_acc = Array2::<T>::zeros(net.w.dim());
    let mut gd_acc = Array2::<T>::zeros(net.d.dim());
    let mut gv_acc = Array1::<T>::zeros(net.v.len());
    for (p, y) in patch_stacks.iter().zip(targets.iter()) {
        let (f, dw, dd, h) = net.forward_full(p);
        let diff = f - *y;
        gw_acc.scaled_add(diff, &dw);
        gd_acc.scaled_add(diff, &dd);
        gv_acc.scaled_add(diff, &h);
    }
    let inv_n = T::one() / n;
    let stepped = TheoremNet {
        w: gw_acc.mapv(|g| -config.lr * g * inv_n),
        d: &net.d - &gd_acc.mapv(|g| config.lr * g * inv_n),
        v: &net.v - &gv_acc.mapv(|g| config.lr * g * inv_n),
        activation: config.activation,
    };

    let a = FeatureMatrix::new(stepped.w.t().dot(&stepped.w))?;
    let mut rng_probe = rng_for(config.seed, "theorem-probe");
    let probe = ImageTensor::from_fn(c, ih, iw, |_, _, _| T::standard_normal(&mut rng_probe));
    let probe_patches = extract_patches(&probe, &patch)?.into_rows();
    let (_, dz) = stepped.forward_grads(&probe_patches);
    let patch_grads = dz.dot(&stepped.w);
    let b = FeatureMatrix::new(patch_grads.t().dot(&patch_grads))?;

    let a_zero = a.entries().iter().all(|x| *x == T::zero());
    let b_zero = b.entries().iter().all(|x| *x == T::zero());
    if a_zero || b_zero {
        if a_zero && b_zero {
            return Ok(TheoremVerdict::BothZero);
        }
        return Err(Error::AssumptionViolated(
            "exactly one side of the proportionality vanished".into(),
        ));
    }
    let sim = similarity(&a, &b)?;
    let (_, residual) = proportionality_residual(&a, &b)?;
    Ok(TheoremVerdict::Proportional {
        pearson: sim.pearson,
        residual,
    })
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

/// Writes the network to the binary weight-checkpoint container.
pub fn write_cnn<T: Scalar>(path: &Path, net: &MiniCnn<T>) -> Result<()> {
    let mut w = ContainerWriter::create(path)?;
    w.write_header(CNN_MAGIC, net.layers.len() as u32, 0)?;
    let (c, h, wid) = net.input_shape;
    w.write_u32(c as u32)?;
    w.write_u32(h as u32)?;
    w.write_u32(wid as u32)?;
    w.write_u32(net.outputs() as u32)?;
    for layer in &net.layers {
        w.write_u32(layer.spec.filters as u32)?;
        w.write_u32(layer.spec.patch_size as u32)?;
        w.write_u32(layer.spec.padding as u32)?;
        w.write_u32(layer.spec.activation.code())?;
        w.write_u32(layer.spec.pooling.code())?;
        w.write_u32(layer.weights.nrows() as u32)?;
        w.write_u32(layer.weights.ncols() as u32)?;
        w.write_f64_iter(layer.weights.iter().copied())?;
    }
    w.write_u32(net.head.nrows() as u32)?;
    w.write_u32(net.head.ncols() as u32)?;
    w.write_f64_iter(net.head.iter().copied())?;
    w.finish()
}

/// Reads a network checkpoint back; structural problems surface as format
/// errors with the byte offset.
pub fn read_cnn<T: Scalar>(path: &Path) -> Result<MiniCnn<T>> {
    let mut r = ContainerReader::open(path)?;
    let (n_layers, _) = r.read_header(CNN_MAGIC)?;
    let raw_c = r.read_u32()?;
    let c = r.check_extent("input channels", u64::from(raw_c))? as usize;
    let raw_h = r.read_u32()?;
    let h = r.check_extent("input height", u64::from(raw_h))? as usize;
    let raw_wid = r.read_u32()?;
    let wid = r.check_extent("input width", u64::from(raw_wid))? as usize;
    let raw_outputs = r.read_u32()?;
    let outputs = r.check_extent("outputs", u64::from(raw_outputs))? as usize;
    let mut specs = Vec::with_capacity(n_layers as usize);
    let mut weights = Vec::with_capacity(n_layers as usize);
    for _ in 0..n_layers {
        let raw_filters = r.read_u32()?;
    let filters = r.check_extent("layer filters", u64::from(raw_filters))? as usize;
        let raw_patch_size = r.read_u32()?;
    let patch_size = r.check_extent("layer patch size", u64::from(raw_patch_size))? as usize;
        let padding = r.read_u32()? as usize;
        let act_code = r.read_u32()?;
        let activation = CnnActivation::from_code(act_code)
            .ok_or_else(|| r.fail(format!("unknown activation code {act_code}")))?;
        let pool_code = r.read_u32()?;
        let pooling = Pooling::from_code(pool_code)
            .ok_or_else(|| r.fail(format!("unknown pooling code {pool_code}")))?;
        let raw_rows = r.read_u32()?;
    let rows = r.check_extent("weight rows", u64::from(raw_rows))? as usize;
        let raw_cols = r.read_u32()?;
    let cols = r.check_extent("weight cols", u64::from(raw_cols))? as usize;
        if rows != filters {
            return Err(r.fail(format!(
                "weight rows {rows} disagree with filter count {filters}"
            )));
        }
        let data = r.read_f64_vec::<T>(rows * cols)?;
        let w = Array2::from_shape_vec((rows, cols), data)
            .map_err(|e| r.fail(format!("weight block: {e}")))?;
        specs.push(ConvLayerSpec {
            filters,
            patch_size,
            padding,
            activation,
            pooling,
        });
        weights.push(w);
    }
    let raw_hr = r.read_u32()?;
    let hr = r.check_extent("readout rows", u64::from(raw_hr))? as usize;
    let raw_hc = r.read_u32()?;
    let hc = r.check_extent("readout cols", u64::from(raw_hc))? as usize;
    if hr != outputs {
        return Err(r.fail(format!(
            "readout rows {hr} disagree with declared outputs {outputs}"
        )));
    }
    let data = r.read_f64_vec::<T>(hr * hc)?;
    let head = Array2::from_shape_vec((hr, hc), data)
        .map_err(|e| r.fail(format!("readout block: {e}")))?;
    let offset = r.offset();
    r.expect_eof()?;
    MiniCnn::from_parts((c, h, wid), &specs, weights, head)
        .map_err(|e| Error::format(path.display().to_string(), offset, e.to_string()))
}
