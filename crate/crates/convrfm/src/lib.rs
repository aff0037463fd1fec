//! Convolutional recursive feature machines.
//!
//! Patch-based kernel machines whose feature matrix `M` is learned by
//! iterating the patch-AGOP (average gradient outer product) of the fitted
//! predictor, together with a deep variant that stacks learned convolutional
//! feature maps, a minimal CNN used to check the convolutional neural feature
//! ansatz, synthetic local-signal benchmarks, and feature-map visualization.

pub mod agop;
pub mod bench;
pub mod cnn;
pub mod container;
pub mod data;
pub mod error;
pub mod feature;
pub mod kernel;
pub mod linalg;
pub mod deep;
pub mod regression;
pub mod rfm;
pub mod scalar;
pub mod seeds;
pub mod tensor;
pub mod viz;

pub use agop::{
    compute_agop, matrix_power, matrix_sqrt, matrix_sqrt_with_report, proportionality_residual,
    read_feature_matrix, similarity, write_feature_matrix, write_feature_matrix_csv,
    AgopExponent, PatchGradientSource, SimilarityReport,
};
pub use bench::{
    benchmark_csv, run_benchmark, BenchmarkRow, BenchmarkTask, CnnTaskSpec, Method,
};
pub use cnn::{
    compute_network_agop, extract_cnfm, read_cnn, theorem_one_check, train, verify_ansatz,
    write_cnn, AnsatzLayerReport, CnnActivation, ConvLayer, ConvLayerSpec, EpochMetrics,
    ForwardCache, Gradients, MiniCnn, Optimizer, Pooling, TheoremConfig, TheoremVerdict,
    TrainConfig, TrainReport,
};
pub use deep::{read_filter_bank, write_filter_bank,
    forward_layer, run_deep_convrfm, sample_filters, Activation, DeepConfig, DeepLayerRecord,
    DeepOutcome, DEFAULT_FILTERS,
};
pub use data::{
    gen_bars, gen_digit_in_noise, load_idx, read_labeled_set, write_labeled_set,
    write_synthetic_digit_idx, ChannelStats, IdxData, LabeledSet, RGB_MEAN, RGB_STD,
};
pub use error::{Error, Result};
pub use feature::FeatureMatrix;
pub use kernel::{
    dual_relu, dual_relu_with_form, kernel_gram, kernel_matrix, kernel_patch_gradient,
    kernel_patch_gradient_grids, kernel_value, kernel_value_grids, DualReluForm, KernelContext,
    KernelFamily, KernelSpec, PairCoeffs, PreparedImage,
};
pub use linalg::{cholesky, cholesky_solve, sym_eigen, SymEigen};
pub use regression::{
    fit, solve_regularized, KernelModel, OutputSelector, PreparedKernel, RIDGE_GRID,
};
pub use rfm::{
    accuracy, encode_targets, predicted_labels, run_convrfm, run_convrfm_with_targets,
    IterationMetrics, RfmConfig, RfmOutcome, METRICS_TOP_EIGENVALUES,
};
pub use scalar::Scalar;
pub use seeds::{derive_seed, rng_for};
pub use tensor::{
    apply_patch_transform, extract_patches, fold_to_image, scatter_patches, ImageTensor,
    PatchGrid, PatchSpec,
};
pub use viz::{
    edge_split_agreement, eigenvector_tiles, patch_operator_map, read_pgm, write_image,
    EigenTile, ImageFormat,
};

/// Concrete `f64` aliases; the `f32` set lives alongside for experimentation.
pub type ImageTensor64 = ImageTensor<f64>;
pub type PatchGrid64 = PatchGrid<f64>;
pub type FeatureMatrix64 = FeatureMatrix<f64>;
pub type KernelSpec64 = KernelSpec<f64>;

pub type ImageTensor32 = ImageTensor<f32>;
pub type PatchGrid32 = PatchGrid<f32>;
pub type FeatureMatrix32 = FeatureMatrix<f32>;
pub type KernelSpec32 = KernelSpec<f32>;
