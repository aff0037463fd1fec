//! `train-cnn`: trains the minimal CNN and checkpoints initial and final
//! weights so the ansatz check can compare them later.

use std::path::PathBuf;

use clap::Args;
use convrfm::{
    train, write_cnn, CnnActivation, ConvLayerSpec, MiniCnn, Optimizer, Pooling, TrainConfig,
};

use crate::error::{CliError, CliResult};
use crate::settings::{apply_threads, ensure_out_dir, write_manifest, write_text, Settings};
use crate::CommonArgs;

use super::{load_standardized, load_with_stats};

pub const INIT_FILE: &str = "init.cnnw";
pub const TRAINED_FILE: &str = "trained.cnnw";
pub const METRICS_CSV: &str = "metrics.csv";

pub fn parse_pooling(raw: &str) -> CliResult<Pooling> {
    match raw {
        "none" => Ok(Pooling::None),
        "max" => Ok(Pooling::Max),
        "avg" => Ok(Pooling::Average),
        other => Err(CliError::usage(format!(
            "key 'pooling': expected none, max or avg, got '{other}'"
        ))),
    }
}

pub fn parse_activation(raw: &str) -> CliResult<CnnActivation> {
    match raw {
        "relu" => Ok(CnnActivation::Relu),
        "tanh" => Ok(CnnActivation::Tanh),
        "identity" => Ok(CnnActivation::Identity),
        other => Err(CliError::usage(format!(
            "key 'activation': expected relu, tanh or identity, got '{other}'"
        ))),
    }
}

pub fn parse_optimizer(raw: &str) -> CliResult<Optimizer> {
    match raw {
        "sgd" => Ok(Optimizer::Sgd),
        "adam" => Ok(Optimizer::Adam),
        other => Err(CliError::usage(format!(
            "key 'optimizer': expected sgd or adam, got '{other}'"
        ))),
    }
}

/// Optimizer-specific learning-rate default.
pub fn default_lr(optimizer: Optimizer) -> f64 {
    match optimizer {
        Optimizer::Adam => 1e-4,
        Optimizer::Sgd => 1e-1,
    }
}

#[derive(Args)]
pub struct TrainCnnArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Training dataset container
    #[arg(long)]
    data: Option<String>,
    /// Held-out dataset container for per-epoch validation accuracy
    #[arg(long)]
    eval: Option<String>,
    /// Convolutional layer count
    #[arg(long)]
    depth: Option<usize>,
    /// Filters per layer
    #[arg(long)]
    width: Option<usize>,
    /// Patch size
    #[arg(long)]
    q: Option<usize>,
    /// Zero padding
    #[arg(long)]
    padding: Option<usize>,
    /// Pooling after each layer: none | max | avg
    #[arg(long)]
    pooling: Option<String>,
    /// Activation: relu | tanh | identity
    #[arg(long)]
    activation: Option<String>,
    /// Optimizer: sgd | adam
    #[arg(long)]
    optimizer: Option<String>,
    /// Learning rate (default 1e-4 for adam, 1e-1 for sgd)
    #[arg(long)]
    lr: Option<f64>,
    /// Training epochs
    #[arg(long)]
    epochs: Option<usize>,
    /// Minibatch size
    #[arg(long)]
    batch: Option<usize>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
}

pub fn run(args: TrainCnnArgs) -> CliResult<()> {
    let mut s = Settings::load(args.common.config.as_deref())?;
    let data = s.require("data", args.data)?;
    let eval = s.optional("eval", args.eval)?;
    let depth = s.value("depth", args.depth, 3)?;
    let width = s.value("width", args.width, 64)?;
    let q = s.value("q", args.q, 3)?;
    let padding = s.value("padding", args.padding, 0)?;
    let pooling = parse_pooling(&s.value("pooling", args.pooling, "none".to_string())?)?;
    let activation = parse_activation(&s.value("activation", args.activation, "relu".to_string())?)?;
    let optimizer = parse_optimizer(&s.value("optimizer", args.optimizer, "adam".to_string())?)?;
    let lr = s.value("lr", args.lr, default_lr(optimizer))?;
    let epochs = s.value("epochs", args.epochs, 25)?;
    let batch = s.value("batch", args.batch, 128)?;
    let seed = s.value("seed", args.seed, 0)?;
    let out = s.value("out", args.common.out, "runs/train-cnn".to_string())?;
    let threads = s.value("threads", args.common.threads, 0)?;
    s.finish()?;
    apply_threads(threads);

    let out = ensure_out_dir(&out)?;
    let (train_set, stats) = load_standardized(&data)?;
    let eval_set = match &eval {
        Some(path) => Some(load_with_stats(path, &stats)?),
        None => None,
    };

    let input_shape = train_set.images[0].shape();
    let outputs = if train_set.classes == 2 {
        1
    } else {
        train_set.classes
    };
    let spec = ConvLayerSpec {
        filters: width,
        patch_size: q,
        padding,
        activation,
        pooling,
    };
    let specs = vec![spec; depth];
    let mut net = MiniCnn::<f64>::new(input_shape, &specs, outputs, seed)?;

    let mut artifacts: Vec<PathBuf> = Vec::new();
    let init_path = out.join(INIT_FILE);
    write_cnn(&init_path, &net)?;
    artifacts.push(init_path);

    let config = TrainConfig {
        optimizer,
        epochs,
        lr,
        batch_size: batch,
        seed,
    };
    let val = eval_set
        .as_ref()
        .map(|set| (set.images.as_slice(), set.labels.as_slice()));
    let report = train(
        &mut net,
        &train_set.images,
        &train_set.labels,
        train_set.classes,
        val,
        &config,
    )?;

    let trained_path = out.join(TRAINED_FILE);
    write_cnn(&trained_path, &net)?;
    artifacts.push(trained_path);

    let mut csv = String::from("epoch,train_loss,train_accuracy,val_accuracy\n");
    for e in &report.epochs {
        csv.push_str(&format!("{},{},{}", e.epoch, e.train_loss, e.train_accuracy));
        csv.push(',');
        if let Some(v) = e.val_accuracy {
            csv.push_str(&v.to_string());
        }
        csv.push('\n');
    }
    let metrics_path = out.join(METRICS_CSV);
    write_text(&metrics_path, &csv)?;
    artifacts.push(metrics_path);

    println!(
        "trained {depth} conv layers for {epochs} epochs; best epoch {} (accuracy {:.4})",
        report.best_epoch, report.best_accuracy
    );
    write_manifest(&out, "train-cnn", &s, &artifacts)?;
    Ok(())
}
