//! `verify-ansatz`: per-layer alignment between a trained network's filter
//! Grams and its own patch-gradient outer products.

use std::path::{Path, PathBuf};

use clap::Args;
use convrfm::{read_cnn, verify_ansatz};

use crate::error::{CliError, CliResult};
use crate::settings::{apply_threads, ensure_out_dir, write_manifest, write_text, Settings};
use crate::CommonArgs;

use super::load_standardized;

pub const ANSATZ_CSV: &str = "ansatz.csv";

#[derive(Args)]
pub struct AnsatzArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Trained weight checkpoint
    #[arg(long)]
    checkpoint: Option<String>,
    /// Initial-weights checkpoint (default: init.cnnw next to the trained one)
    #[arg(long)]
    init: Option<String>,
    /// Probe dataset container
    #[arg(long)]
    data: Option<String>,
    /// Probe images used (cap)
    #[arg(long)]
    sample: Option<usize>,
    /// Layers to report: `all` or a comma-separated 1-based list
    #[arg(long)]
    layers: Option<String>,
    /// Subtract the initial weights before forming the filter Gram
    #[arg(long)]
    subtract_init: Option<bool>,
}

fn parse_layers(raw: &str, depth: usize) -> CliResult<Vec<usize>> {
    if raw == "all" {
        return Ok((1..=depth).collect());
    }
    let mut picked = Vec::new();
    for part in raw.split(',') {
        let l: usize = part.trim().parse().map_err(|_| {
            CliError::usage(format!("key 'layers': cannot parse '{part}' as a layer index"))
        })?;
        if l == 0 || l > depth {
            return Err(CliError::usage(format!(
                "key 'layers': layer {l} out of range 1..={depth}"
            )));
        }
        picked.push(l);
    }
    Ok(picked)
}

pub fn run(args: AnsatzArgs) -> CliResult<()> {
    let mut s = Settings::load(args.common.config.as_deref())?;
    let checkpoint = s.require("checkpoint", args.checkpoint)?;
    let init = s.optional("init", args.init)?;
    let data = s.require("data", args.data)?;
    let sample = s.value("sample", args.sample, 200)?;
    let layers_raw = s.value("layers", args.layers, "all".to_string())?;
    let subtract_init = s.value("subtract-init", args.subtract_init, false)?;
    let out = s.value("out", args.common.out, "runs/verify-ansatz".to_string())?;
    let threads = s.value("threads", args.common.threads, 0)?;

    let init = match init {
        Some(path) => path,
        None => {
            let sibling = Path::new(&checkpoint)
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(super::cnn_train::INIT_FILE);
            if !sibling.exists() {
                return Err(CliError::usage(format!(
                    "no --init given and {} does not exist",
                    sibling.display()
                )));
            }
            sibling.display().to_string()
        }
    };
    s.force("init", &init);
    s.finish()?;
    apply_threads(threads);

    let out = ensure_out_dir(&out)?;
    let trained = read_cnn::<f64>(Path::new(&checkpoint))?;
    let initial = read_cnn::<f64>(Path::new(&init))?;
    let picked = parse_layers(&layers_raw, trained.depth())?;

    let (probe, _) = load_standardized(&data)?;
    let n = sample.min(probe.images.len());
    if n == 0 {
        return Err(CliError::usage("probe dataset is empty".to_string()));
    }
    let xs = &probe.images[..n];

    let reports = verify_ansatz(&trained, &initial, xs, subtract_init)?;
    let mut csv = String::from("layer,pearson,cosine,control_pearson\n");
    for report in &reports {
        let layer = report.layer + 1;
        if !picked.contains(&layer) {
            continue;
        }
        csv.push_str(&format!(
            "{layer},{},{},{}\n",
            report.trained_vs_agop.pearson,
            report.trained_vs_agop.cosine,
            report.init_vs_trained.pearson
        ));
        println!(
            "layer {layer}: correlation {:.4} (cosine {:.4}, init-vs-trained control {:.4})",
            report.trained_vs_agop.pearson,
            report.trained_vs_agop.cosine,
            report.init_vs_trained.pearson
        );
    }
    let csv_path = out.join(ANSATZ_CSV);
    write_text(&csv_path, &csv)?;
    let artifacts: Vec<PathBuf> = vec![csv_path];
    write_manifest(&out, "verify-ansatz", &s, &artifacts)?;
    Ok(())
}
