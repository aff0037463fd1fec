//! `deep-convrfm`: the layerwise variant with sampled filter banks.

use std::path::PathBuf;

use clap::Args;
use convrfm::{
    accuracy, run_deep_convrfm, write_feature_matrix, write_feature_matrix_csv, write_filter_bank,
    DeepConfig,
};

use crate::error::CliResult;
use crate::settings::{apply_threads, ensure_out_dir, write_manifest, write_text, Settings};
use crate::CommonArgs;

use super::rfm::{KernelRfmFlags, EVAL_CSV};
use super::{load_standardized, load_with_stats, metrics_csv};

#[derive(Args)]
pub struct DeepArgs {
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
    /// Layer count L
    #[arg(long)]
    layers: Option<usize>,
    /// Filters sampled per non-final layer
    #[arg(long)]
    filters: Option<usize>,
    /// Comma-separated kernel patch stride per layer
    #[arg(long)]
    layer_strides: Option<String>,
}

pub fn run(args: DeepArgs) -> CliResult<()> {
    let mut s = Settings::load(args.common.config.as_deref())?;
    let data = s.require("data", args.data)?;
    let eval = s.optional("eval", args.eval)?;
    let layers = s.value("layers", args.layers, 2)?;
    let filters = s.value("filters", args.filters, convrfm::DEFAULT_FILTERS)?;
    // The kernel loses one compositional level per layer, so its default
    // depth is the layer count.
    let rfm = args.flags.resolve(&mut s, layers.max(1))?;
    let default_strides = vec![rfm.kernel.stride; layers.max(1)];
    let layer_strides = s.list("layer-strides", args.layer_strides, &default_strides)?;
    let out = s.value("out", args.common.out, "runs/deep-convrfm".to_string())?;
    let threads = s.value("threads", args.common.threads, 0)?;
    s.finish()?;
    apply_threads(threads);

    let out = ensure_out_dir(&out)?;
    let (train, stats) = load_standardized(&data)?;
    let mut config = DeepConfig::new(layers, rfm.build()?);
    config.filters = filters;
    config.layer_strides = layer_strides;
    let outcome = run_deep_convrfm(&train.images, &train.labels, train.classes, &config)?;

    let mut artifacts: Vec<PathBuf> = Vec::new();
    for record in &outcome.layers {
        let l = record.layer;
        let feature_path = out.join(format!("layer-{l}.cnfm"));
        write_feature_matrix(&feature_path, &record.feature_matrix)?;
        artifacts.push(feature_path);
        let csv_path = out.join(format!("layer-{l}.csv"));
        write_feature_matrix_csv(&csv_path, &record.feature_matrix)?;
        artifacts.push(csv_path);
        let metrics_path = out.join(format!("layer-{l}-metrics.csv"));
        write_text(&metrics_path, &metrics_csv(&record.metrics))?;
        artifacts.push(metrics_path);
        if let Some(w) = &record.filters {
            let bank_path = out.join(format!("layer-{l}.cnfb"));
            write_filter_bank(&bank_path, w)?;
            artifacts.push(bank_path);
        }
        let best = &record.metrics[record.best_iteration - 1];
        println!(
            "layer {l}: best round {} (lambda {}, validation accuracy {:.4})",
            record.best_iteration, best.lambda, best.val_acc
        );
    }

    if let Some(eval_path) = eval {
        let test = load_with_stats(&eval_path, &stats)?;
        let learned = accuracy(&outcome.predict_batch(&test.images)?.view(), &test.labels);
        let eval_csv = format!("model,accuracy\ndeep-convrfm,{learned}\n");
        let eval_file = out.join(EVAL_CSV);
        write_text(&eval_file, &eval_csv)?;
        artifacts.push(eval_file);
        println!("test accuracy: deep-convrfm {learned:.4}");
    }

    write_manifest(&out, "deep-convrfm", &s, &artifacts)?;
    Ok(())
}
