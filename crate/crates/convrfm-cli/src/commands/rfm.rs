//! `convrfm`: fits the recursive feature machine on a dataset container.

use std::path::PathBuf;

use clap::Args;
use convrfm::{accuracy, run_convrfm, write_feature_matrix, write_feature_matrix_csv};

use crate::error::CliResult;
use crate::settings::{apply_threads, ensure_out_dir, write_manifest, write_text, Settings};
use crate::CommonArgs;

use super::{load_standardized, load_with_stats, metrics_csv, KernelSettings, RfmSettings};

pub const FEATURE_FILE: &str = "feature-matrix.cnfm";
pub const FEATURE_CSV: &str = "feature-matrix.csv";
pub const METRICS_CSV: &str = "metrics.csv";
pub const EVAL_CSV: &str = "eval.csv";

/// Kernel and feature-machine flags shared by the kernel-machine commands.
#[derive(Args)]
pub struct KernelRfmFlags {
    /// Kernel family: relu-cnngp | conv-laplace
    #[arg(long)]
    pub kernel: Option<String>,
    /// Compositional depth of the relu-cnngp kernel
    #[arg(long)]
    pub depth: Option<usize>,
    /// Bandwidth of the conv-laplace kernel
    #[arg(long)]
    pub bandwidth: Option<f64>,
    /// Patch size
    #[arg(long)]
    pub q: Option<usize>,
    /// Patch stride
    #[arg(long)]
    pub stride: Option<usize>,
    /// Zero padding
    #[arg(long)]
    pub padding: Option<usize>,
    /// Feature-learning rounds
    #[arg(long)]
    pub iters: Option<usize>,
    /// Comma-separated ridge candidates
    #[arg(long)]
    pub ridge_grid: Option<String>,
    /// Power of the learned operator inside the kernel: 1 | 0.5
    #[arg(long)]
    pub exponent: Option<String>,
    /// Fraction of training data held out for round/ridge selection
    #[arg(long)]
    pub val_fraction: Option<f64>,
    /// Master seed
    #[arg(long)]
    pub seed: Option<u64>,
}

impl KernelRfmFlags {
    /// Resolves everything through the settings layer. `default_depth` seeds
    /// the kernel-depth default (the deep command ties it to the layer count).
    pub fn resolve(self, s: &mut Settings, default_depth: usize) -> CliResult<RfmSettings> {
        let kernel = KernelSettings::resolve(
            s,
            self.kernel,
            self.depth,
            self.bandwidth,
            self.q,
            self.stride,
            self.padding,
            default_depth,
        )?;
        RfmSettings::resolve(
            s,
            kernel,
            self.iters,
            self.ridge_grid,
            self.exponent,
            self.val_fraction,
            self.seed,
        )
    }
}

#[derive(Args)]
pub struct ConvrfmArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Training dataset container
    #[arg(long)]
    data: Option<String>,
    /// Held-out dataset container for accuracy reporting
    #[arg(long)]
    eval: Option<String>,
    #[command(flatten)]
    flags: KernelRfmFlags,
}

pub fn run(args: ConvrfmArgs) -> CliResult<()> {
    let mut s = Settings::load(args.common.config.as_deref())?;
    let data = s.require("data", args.data)?;
    let eval = s.optional("eval", args.eval)?;
    let rfm = args.flags.resolve(&mut s, 2)?;
    let out = s.value("out", args.common.out, "runs/convrfm".to_string())?;
    let threads = s.value("threads", args.common.threads, 0)?;
    s.finish()?;
    apply_threads(threads);

    let out = ensure_out_dir(&out)?;
    let (train, stats) = load_standardized(&data)?;
    let config = rfm.build()?;
    let outcome = run_convrfm(&train.images, &train.labels, train.classes, &config)?;

    let mut artifacts: Vec<PathBuf> = Vec::new();
    let feature_path = out.join(FEATURE_FILE);
    write_feature_matrix(&feature_path, &outcome.feature_matrix)?;
    artifacts.push(feature_path);
    let csv_path = out.join(FEATURE_CSV);
    write_feature_matrix_csv(&csv_path, &outcome.feature_matrix)?;
    artifacts.push(csv_path);
    let metrics_path = out.join(METRICS_CSV);
    write_text(&metrics_path, &metrics_csv(&outcome.metrics))?;
    artifacts.push(metrics_path);

    let best = &outcome.metrics[outcome.best_iteration - 1];
    println!(
        "best round {} of {} (lambda {}, validation accuracy {:.4})",
        outcome.best_iteration,
        outcome.metrics.len(),
        best.lambda,
        best.val_acc
    );

    if let Some(eval_path) = eval {
        let test = load_with_stats(&eval_path, &stats)?;
        let learned = accuracy(
            &outcome.model.predict_batch(&test.images)?.view(),
            &test.labels,
        );
        let baseline = accuracy(
            &outcome.first_model.predict_batch(&test.images)?.view(),
            &test.labels,
        );
        let eval_csv = format!("model,accuracy\nconvrfm,{learned}\nfixed-kernel,{baseline}\n");
        let eval_file = out.join(EVAL_CSV);
        write_text(&eval_file, &eval_csv)?;
        artifacts.push(eval_file);
        println!("test accuracy: convrfm {learned:.4}, fixed-kernel {baseline:.4}");
    }

    write_manifest(&out, "convrfm", &s, &artifacts)?;
    Ok(())
}
