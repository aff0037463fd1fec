//! `gen-data`: writes a synthetic dataset container.

use std::path::PathBuf;

use clap::Args;
use convrfm::{derive_seed, gen_bars, gen_digit_in_noise, write_labeled_set};

use crate::error::{CliError, CliResult};
use crate::settings::{apply_threads, ensure_out_dir, write_manifest, Settings};
use crate::CommonArgs;

pub const DATASET_FILE: &str = "dataset.dset";
pub const IDX_IMAGES: &str = "train-images-idx3-ubyte";
pub const IDX_LABELS: &str = "train-labels-idx1-ubyte";

#[derive(Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Task: bars | digits-in-noise
    #[arg(long)]
    task: Option<String>,
    /// Sample count
    #[arg(long)]
    n: Option<usize>,
    /// Noise standard deviation
    #[arg(long)]
    sigma: Option<f64>,
    /// Master seed
    #[arg(long)]
    seed: Option<u64>,
    /// Image side for the bars task
    #[arg(long)]
    side: Option<usize>,
    /// Bar length for the bars task
    #[arg(long)]
    bar_len: Option<usize>,
    /// Canvas side for the digits task
    #[arg(long)]
    canvas: Option<usize>,
    /// Directory with IDX digit files; omitted, a synthetic glyph set is
    /// generated under the output directory
    #[arg(long)]
    digit_source: Option<String>,
    /// Glyph images per class when synthesizing the digit source
    #[arg(long)]
    per_class: Option<usize>,
}

pub fn run(args: GenDataArgs) -> CliResult<()> {
    let mut s = Settings::load(args.common.config.as_deref())?;
    let task = s.value("task", args.task, "bars".to_string())?;
    let n = s.value("n", args.n, 1000)?;
    let sigma = s.value("sigma", args.sigma, 0.5)?;
    let seed = s.value("seed", args.seed, 0)?;
    let side = s.value("side", args.side, 32)?;
    let bar_len = s.value("bar-len", args.bar_len, 8)?;
    let canvas = s.value("canvas", args.canvas, 56)?;
    let digit_source = s.optional("digit-source", args.digit_source)?;
    let per_class = s.value("per-class", args.per_class, 200)?;
    let out = s.value("out", args.common.out, "runs/gen-data".to_string())?;
    let threads = s.value("threads", args.common.threads, 0)?;

    let out = ensure_out_dir(&out)?;
    let mut artifacts: Vec<PathBuf> = Vec::new();

    let set = match task.as_str() {
        "bars" => {
            s.finish()?;
            apply_threads(threads);
            gen_bars::<f64>(n, side, bar_len, sigma, seed)?
        }
        "digits-in-noise" => {
            let source = match digit_source {
                Some(dir) => PathBuf::from(dir),
                None => {
                    let dir = out.join("digit-source");
                    convrfm::write_synthetic_digit_idx(
                        &dir,
                        per_class,
                        derive_seed(seed, "digit-font"),
                    )?;
                    artifacts.push(dir.join(IDX_IMAGES));
                    artifacts.push(dir.join(IDX_LABELS));
                    dir
                }
            };
            s.force("digit-source", source.display());
            s.finish()?;
            apply_threads(threads);
            gen_digit_in_noise::<f64>(&source, n, canvas, sigma, seed)?
        }
        other => {
            return Err(CliError::usage(format!(
                "key 'task': expected bars or digits-in-noise, got '{other}'"
            )))
        }
    };

    let dataset = out.join(DATASET_FILE);
    write_labeled_set(&dataset, &set)?;
    artifacts.push(dataset);
    write_manifest(&out, "gen-data", &s, &artifacts)?;
    println!(
        "wrote {} samples ({} classes, sigma {sigma}) to {}",
        set.images.len(),
        set.classes,
        out.join(DATASET_FILE).display()
    );
    Ok(())
}
