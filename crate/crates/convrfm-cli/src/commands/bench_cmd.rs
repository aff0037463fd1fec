//! `benchmark`: accuracy sweep of every method across noise levels.

use std::path::PathBuf;

use clap::Args;
use convrfm::{
    benchmark_csv, derive_seed, gen_bars, gen_digit_in_noise, run_benchmark, BenchmarkTask,
    CnnTaskSpec, ConvLayerSpec, DeepConfig, LabeledSet, Method, TrainConfig,
};

use crate::error::{CliError, CliResult};
use crate::settings::{apply_threads, ensure_out_dir, write_manifest, write_text, Settings};
use crate::CommonArgs;

use super::cnn_train::{default_lr, parse_activation, parse_optimizer, parse_pooling};
use super::rfm::KernelRfmFlags;

pub const BENCHMARK_CSV: &str = "benchmark.csv";

#[derive(Args)]
pub struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[command(flatten)]
    flags: KernelRfmFlags,
    /// Task: bars | digits-in-noise
    #[arg(long)]
    task: Option<String>,
    /// Comma-separated noise levels
    #[arg(long)]
    sigmas: Option<String>,
    /// Comma-separated methods: fixed-kernel | convrfm | deep-convrfm | cnn
    #[arg(long)]
    methods: Option<String>,
    /// Training samples per noise level
    #[arg(long)]
    n_train: Option<usize>,
    /// Test samples per noise level
    #[arg(long)]
    n_test: Option<usize>,
    /// Image side for the bars task
    #[arg(long)]
    side: Option<usize>,
    /// Bar length for the bars task
    #[arg(long)]
    bar_len: Option<usize>,
    /// Canvas side for the digits task
    #[arg(long)]
    canvas: Option<usize>,
    /// Directory with IDX digit files (digits task; synthesized when absent)
    #[arg(long)]
    digit_source: Option<String>,
    /// Glyph images per class when synthesizing the digit source
    #[arg(long)]
    per_class: Option<usize>,
    /// Deep variant: layer count
    #[arg(long)]
    layers: Option<usize>,
    /// Deep variant: filters per non-final layer
    #[arg(long)]
    filters: Option<usize>,
    /// Deep variant: comma-separated per-layer strides
    #[arg(long)]
    layer_strides: Option<String>,
    /// CNN: conv layer count
    #[arg(long)]
    cnn_depth: Option<usize>,
    /// CNN: filters per layer
    #[arg(long)]
    cnn_width: Option<usize>,
    /// CNN: pooling none | max | avg
    #[arg(long)]
    cnn_pooling: Option<String>,
    /// CNN: activation relu | tanh | identity
    #[arg(long)]
    cnn_activation: Option<String>,
    /// CNN: optimizer sgd | adam
    #[arg(long)]
    cnn_optimizer: Option<String>,
    /// CNN: learning rate (default 1e-4 adam, 1e-1 sgd)
    #[arg(long)]
    cnn_lr: Option<f64>,
    /// CNN: epochs
    #[arg(long)]
    cnn_epochs: Option<usize>,
    /// CNN: minibatch size
    #[arg(long)]
    cnn_batch: Option<usize>,
}

pub fn run(args: BenchArgs) -> CliResult<()> {
    let mut s = Settings::load(args.common.config.as_deref())?;
    let task = s.value("task", args.task, "bars".to_string())?;
    let sigmas = s.list("sigmas", args.sigmas, &[0.1, 0.3, 0.5, 0.7, 1.0])?;
    let method_names = s.list(
        "methods",
        args.methods,
        &[
            "fixed-kernel".to_string(),
            "convrfm".to_string(),
            "deep-convrfm".to_string(),
            "cnn".to_string(),
        ],
    )?;
    let n_train = s.value("n-train", args.n_train, 2000)?;
    let n_test = s.value("n-test", args.n_test, 500)?;
    let side = s.value("side", args.side, 32)?;
    let bar_len = s.value("bar-len", args.bar_len, 8)?;
    let canvas = s.value("canvas", args.canvas, 56)?;
    let digit_source = s.optional("digit-source", args.digit_source)?;
    let per_class = s.value("per-class", args.per_class, 200)?;
    let layers = s.value("layers", args.layers, 2)?;
    let filters = s.value("filters", args.filters, convrfm::DEFAULT_FILTERS)?;
    let rfm = args.flags.resolve(&mut s, 2)?;
    let default_strides = vec![rfm.kernel.stride; layers.max(1)];
    let layer_strides = s.list("layer-strides", args.layer_strides, &default_strides)?;
    let cnn_depth = s.value("cnn-depth", args.cnn_depth, 3)?;
    let cnn_width = s.value("cnn-width", args.cnn_width, 64)?;
    let cnn_pooling = parse_pooling(&s.value("cnn-pooling", args.cnn_pooling, "max".to_string())?)?;
    let cnn_activation =
        parse_activation(&s.value("cnn-activation", args.cnn_activation, "relu".to_string())?)?;
    let cnn_optimizer =
        parse_optimizer(&s.value("cnn-optimizer", args.cnn_optimizer, "adam".to_string())?)?;
    let cnn_lr = s.value("cnn-lr", args.cnn_lr, default_lr(cnn_optimizer))?;
    let cnn_epochs = s.value("cnn-epochs", args.cnn_epochs, 25)?;
    let cnn_batch = s.value("cnn-batch", args.cnn_batch, 128)?;
    let out = s.value("out", args.common.out, "runs/benchmark".to_string())?;
    let threads = s.value("threads", args.common.threads, 0)?;

    let methods: Vec<Method> = method_names
        .iter()
        .map(|name| Method::parse(name).map_err(CliError::from))
        .collect::<CliResult<_>>()?;
    let seed = rfm.seed;

    let out = ensure_out_dir(&out)?;
    let digits = match task.as_str() {
        "bars" => false,
        "digits-in-noise" => true,
        other => {
            return Err(CliError::usage(format!(
                "key 'task': expected bars or digits-in-noise, got '{other}'"
            )))
        }
    };
    let source_dir = if digits {
        let dir = match digit_source {
            Some(dir) => PathBuf::from(dir),
            None => {
                let dir = out.join("digit-source");
                convrfm::write_synthetic_digit_idx(&dir, per_class, derive_seed(seed, "digit-font"))?;
                dir
            }
        };
        s.force("digit-source", dir.display());
        Some(dir)
    } else {
        None
    };
    s.finish()?;
    apply_threads(threads);

    let needs_deep = methods.contains(&Method::DeepConvRfm);
    let needs_cnn = methods.contains(&Method::Cnn);

    let mut tasks: Vec<BenchmarkTask<f64>> = Vec::with_capacity(sigmas.len());
    for (i, &sigma) in sigmas.iter().enumerate() {
        let train_seed = derive_seed(seed, &format!("bench-train-{i}"));
        let test_seed = derive_seed(seed, &format!("bench-test-{i}"));
        let (mut train, mut test): (LabeledSet<f64>, LabeledSet<f64>) = match &source_dir {
            None => (
                gen_bars(n_train, side, bar_len, sigma, train_seed)?,
                gen_bars(n_test, side, bar_len, sigma, test_seed)?,
            ),
            Some(dir) => (
                gen_digit_in_noise(dir, n_train, canvas, sigma, train_seed)?,
                gen_digit_in_noise(dir, n_test, canvas, sigma, test_seed)?,
            ),
        };
        let stats = train.standardize()?;
        test.apply_stats(&stats)?;

        let rfm_config = rfm.build()?;
        let deep = if needs_deep {
            let mut deep_rfm = rfm_config.clone();
            deep_rfm.kernel = deep_rfm.kernel.with_depth(layers.max(1))?;
            let mut config = DeepConfig::new(layers, deep_rfm);
            config.filters = filters;
            config.layer_strides = layer_strides.clone();
            Some(config)
        } else {
            None
        };
        let cnn = if needs_cnn {
            let spec = ConvLayerSpec {
                filters: cnn_width,
                patch_size: rfm.kernel.q,
                padding: rfm.kernel.padding,
                activation: cnn_activation,
                pooling: cnn_pooling,
            };
            Some(CnnTaskSpec {
                layers: vec![spec; cnn_depth],
                train: TrainConfig {
                    optimizer: cnn_optimizer,
                    epochs: cnn_epochs,
                    lr: cnn_lr,
                    batch_size: cnn_batch,
                    seed: derive_seed(seed, &format!("bench-cnn-{i}")),
                },
            })
        } else {
            None
        };
        tasks.push(BenchmarkTask {
            name: task.clone(),
            train,
            test,
            rfm: rfm_config,
            deep,
            cnn,
        });
    }

    let rows = run_benchmark(&tasks, &methods)?;
    let csv = benchmark_csv(&rows);
    let csv_path = out.join(BENCHMARK_CSV);
    write_text(&csv_path, &csv)?;
    for row in &rows {
        println!(
            "{} on {} (sigma {}): accuracy {:.4}",
            row.method, row.task, row.sigma, row.accuracy
        );
    }
    write_manifest(&out, "benchmark", &s, &[csv_path])?;
    Ok(())
}
