//! Subcommand implementations.

pub mod ansatz;
pub mod bench_cmd;
pub mod cnn_train;
pub mod deep;
pub mod gen_data;
pub mod rfm;
pub mod theorem;
pub mod viz_cmd;

use std::path::Path;

use convrfm::{
    read_labeled_set, AgopExponent, ChannelStats, KernelSpec, LabeledSet, PatchSpec, RfmConfig,
};

use crate::error::{CliError, CliResult};
use crate::settings::Settings;

/// Loads a dataset container and standardizes it in place, returning the
/// per-channel statistics used.
pub fn load_standardized(path: &str) -> CliResult<(LabeledSet<f64>, ChannelStats<f64>)> {
    let mut set = read_labeled_set::<f64>(Path::new(path))?;
    let stats = set.standardize()?;
    Ok((set, stats))
}

/// Loads an evaluation dataset and applies previously computed statistics.
pub fn load_with_stats(path: &str, stats: &ChannelStats<f64>) -> CliResult<LabeledSet<f64>> {
    let mut set = read_labeled_set::<f64>(Path::new(path))?;
    set.apply_stats(stats)?;
    Ok(set)
}

/// Parses the feature-matrix exponent key: `1` or `0.5`.
pub fn parse_exponent(raw: &str) -> CliResult<AgopExponent> {
    match raw {
        "1" => Ok(AgopExponent::One),
        "0.5" => Ok(AgopExponent::Half),
        other => Err(CliError::usage(format!(
            "key 'exponent': expected 1 or 0.5, got '{other}'"
        ))),
    }
}

/// Kernel-related settings shared by the kernel-machine commands. `depth`
/// is the compositional depth for the relu-cnngp family.
pub struct KernelSettings {
    pub kernel: String,
    pub depth: usize,
    pub bandwidth: f64,
    pub q: usize,
    pub stride: usize,
    pub padding: usize,
}

impl KernelSettings {
    pub fn resolve(
        s: &mut Settings,
        kernel: Option<String>,
        depth: Option<usize>,
        bandwidth: Option<f64>,
        q: Option<usize>,
        stride: Option<usize>,
        padding: Option<usize>,
        default_depth: usize,
    ) -> CliResult<Self> {
        Ok(Self {
            kernel: s.value("kernel", kernel, "relu-cnngp".to_string())?,
            depth: s.value("depth", depth, default_depth)?,
            bandwidth: s.value("bandwidth", bandwidth, 10.0)?,
            q: s.value("q", q, 3)?,
            stride: s.value("stride", stride, 1)?,
            padding: s.value("padding", padding, 0)?,
        })
    }

    pub fn build(&self) -> CliResult<KernelSpec<f64>> {
        let patch = PatchSpec::new(self.q, self.stride, self.padding)?;
        match self.kernel.as_str() {
            "relu-cnngp" => Ok(KernelSpec::relu_cnngp(self.depth, patch)?),
            "conv-laplace" => Ok(KernelSpec::conv_laplace(patch).with_bandwidth(self.bandwidth)?),
            other => Err(CliError::usage(format!(
                "key 'kernel': expected relu-cnngp or conv-laplace, got '{other}'"
            ))),
        }
    }
}

/// Feature-machine settings on top of [`KernelSettings`].
pub struct RfmSettings {
    pub kernel: KernelSettings,
    pub iters: usize,
    pub ridge_grid: Vec<f64>,
    pub exponent: AgopExponent,
    pub val_fraction: f64,
    pub seed: u64,
}

impl RfmSettings {
    #[allow(clippy::too_many_arguments)]
    pub fn resolve(
        s: &mut Settings,
        kernel: KernelSettings,
        iters: Option<usize>,
        ridge_grid: Option<String>,
        exponent: Option<String>,
        val_fraction: Option<f64>,
        seed: Option<u64>,
    ) -> CliResult<Self> {
        let exponent_raw = s.value("exponent", exponent, "1".to_string())?;
        Ok(Self {
            kernel,
            iters: s.value("iters", iters, 5)?,
            ridge_grid: s.list("ridge-grid", ridge_grid, &convrfm::RIDGE_GRID)?,
            exponent: parse_exponent(&exponent_raw)?,
            val_fraction: s.value("val-fraction", val_fraction, 0.2)?,
            seed: s.value("seed", seed, 0)?,
        })
    }

    pub fn build(&self) -> CliResult<RfmConfig<f64>> {
        let mut config = RfmConfig::new(self.kernel.build()?);
        config.iters = self.iters;
        config.ridge_grid = self.ridge_grid.clone();
        config.agop_exponent = self.exponent;
        config.val_fraction = self.val_fraction;
        config.seed = self.seed;
        Ok(config)
    }
}

/// Renders per-round metrics as CSV: one row per round, eigenvalue columns
/// padded to the library's reporting width.
pub fn metrics_csv(metrics: &[convrfm::IterationMetrics<f64>]) -> String {
    let width = convrfm::METRICS_TOP_EIGENVALUES;
    let mut out = String::from("iteration,lambda,train_acc,val_acc,trace");
    for i in 1..=width {
        out.push_str(&format!(",eig{i}"));
    }
    out.push('\n');
    for m in metrics {
        out.push_str(&format!(
            "{},{},{},{},{}",
            m.iteration, m.lambda, m.train_acc, m.val_acc, m.trace
        ));
        for i in 0..width {
            out.push(',');
            if let Some(v) = m.top_eigenvalues.get(i) {
                out.push_str(&v.to_string());
            }
        }
        out.push('\n');
    }
    out
}
