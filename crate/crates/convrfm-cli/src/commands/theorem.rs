//! `theorem-check`: one-gradient-step proportionality between the stepped
//! first-layer Gram and the patch-gradient outer product.

use std::path::PathBuf;

use clap::Args;
use convrfm::{rng_for, ImageTensor, Scalar, TheoremConfig, TheoremVerdict};

use crate::error::{CliError, CliResult};
use crate::settings::{apply_threads, ensure_out_dir, write_manifest, write_text, Settings};
use crate::CommonArgs;

pub const REPORT_CSV: &str = "theorem.csv";

/// Built-in sweep grid: channels x patch size x filters x sample count,
/// with the input side one larger than the patch so several patch positions
/// participate.
const SWEEP_CHANNELS: [usize; 3] = [2, 4, 9];
const SWEEP_PATCH: [usize; 2] = [4, 9];
const SWEEP_FILTERS: [usize; 2] = [3, 8];
const SWEEP_SAMPLES: [usize; 2] = [5, 20];

#[derive(Args)]
pub struct TheoremArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Problem dimensions as `channels,side,q,filters`
    #[arg(long)]
    dims: Option<String>,
    /// Sample count
    #[arg(long)]
    n: Option<usize>,
    /// Downstream hidden width
    #[arg(long)]
    hidden: Option<usize>,
    /// Gradient-step learning rate
    #[arg(long)]
    lr: Option<f64>,
    /// Comma-separated seeds, one run per seed
    #[arg(long)]
    seeds: Option<String>,
    /// Run this many sweep cases over the built-in dimension grid instead
    /// of the `dims` settings
    #[arg(long)]
    sweep: Option<usize>,
}

struct RunSpec {
    channels: usize,
    side: usize,
    q: usize,
    filters: usize,
    n: usize,
    seed: u64,
}

struct RunResult {
    spec: RunSpec,
    pearson: Option<f64>,
    residual: Option<f64>,
}

fn run_case(spec: &RunSpec, hidden: usize, lr: f64) -> CliResult<(Option<f64>, Option<f64>)> {
    let mut config =
        TheoremConfig::<f64>::new((spec.channels, spec.side, spec.side), spec.q, spec.seed);
    config.filters = spec.filters;
    config.hidden = hidden;
    config.lr = lr;
    let mut rng_x = rng_for(spec.seed, "theorem-input");
    let xs: Vec<ImageTensor<f64>> = (0..spec.n)
        .map(|_| {
            ImageTensor::from_fn(spec.channels, spec.side, spec.side, |_, _, _| {
                f64::standard_normal(&mut rng_x)
            })
        })
        .collect();
    let mut rng_y = rng_for(spec.seed, "theorem-targets");
    let targets: Vec<f64> = (0..spec.n).map(|_| f64::standard_normal(&mut rng_y)).collect();
    match convrfm::theorem_one_check(&config, &xs, &targets)? {
        TheoremVerdict::Proportional { pearson, residual } => Ok((Some(pearson), Some(residual))),
        TheoremVerdict::BothZero => Ok((None, None)),
    }
}

pub fn run(args: TheoremArgs) -> CliResult<()> {
    let mut s = Settings::load(args.common.config.as_deref())?;
    let dims = s.value("dims", args.dims, "1,8,3,4".to_string())?;
    let n = s.value("n", args.n, 10)?;
    let hidden = s.value("hidden", args.hidden, 6)?;
    let lr = s.value("lr", args.lr, 0.5)?;
    let seeds = s.list("seeds", args.seeds, &[0u64])?;
    let sweep = s.value("sweep", args.sweep, 0)?;
    let out = s.value("out", args.common.out, "runs/theorem-check".to_string())?;
    let threads = s.value("threads", args.common.threads, 0)?;
    s.finish()?;
    apply_threads(threads);
    let out = ensure_out_dir(&out)?;

    let mut specs: Vec<RunSpec> = Vec::new();
    if sweep > 0 {
        let mut grid = Vec::new();
        for &channels in &SWEEP_CHANNELS {
            for &q in &SWEEP_PATCH {
                for &filters in &SWEEP_FILTERS {
                    for &samples in &SWEEP_SAMPLES {
                        grid.push((channels, q, filters, samples));
                    }
                }
            }
        }
        for i in 0..sweep {
            let (channels, q, filters, samples) = grid[i % grid.len()];
            specs.push(RunSpec {
                channels,
                side: q + 1,
                q,
                filters,
                n: samples,
                seed: i as u64,
            });
        }
    } else {
        let parts: Vec<usize> = dims
            .split(',')
            .map(|p| {
                p.trim()
                    .parse()
                    .map_err(|_| CliError::usage(format!("key 'dims': cannot parse '{p}'")))
            })
            .collect::<CliResult<_>>()?;
        if parts.len() != 4 {
            return Err(CliError::usage(
                "key 'dims': expected channels,side,q,filters".to_string(),
            ));
        }
        for &seed in &seeds {
            specs.push(RunSpec {
                channels: parts[0],
                side: parts[1],
                q: parts[2],
                filters: parts[3],
                n,
                seed,
            });
        }
    }

    let mut results: Vec<RunResult> = Vec::with_capacity(specs.len());
    for spec in specs {
        let (pearson, residual) = run_case(&spec, hidden, lr)?;
        results.push(RunResult {
            spec,
            pearson,
            residual,
        });
    }

    let mut csv = String::from("channels,side,q,filters,n,seed,pearson,residual,verdict\n");
    for r in &results {
        let verdict = if r.pearson.is_some() {
            "proportional"
        } else {
            "both-zero"
        };
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{verdict}\n",
            r.spec.channels,
            r.spec.side,
            r.spec.q,
            r.spec.filters,
            r.spec.n,
            r.spec.seed,
            r.pearson.map(|v| v.to_string()).unwrap_or_default(),
            r.residual.map(|v| v.to_string()).unwrap_or_default(),
        ));
    }
    let csv_path = out.join(REPORT_CSV);
    write_text(&csv_path, &csv)?;
    let artifacts: Vec<PathBuf> = vec![csv_path];

    let worst_pearson = results
        .iter()
        .filter_map(|r| r.pearson)
        .min_by(|a, b| a.partial_cmp(b).expect("finite correlations"));
    let worst_residual = results
        .iter()
        .filter_map(|r| r.residual)
        .max_by(|a, b| a.partial_cmp(b).expect("finite residuals"));
    match (worst_pearson, worst_residual) {
        (Some(p), Some(res)) => {
            println!("correlation {p:.6}");
            println!("residual {res:.3e}");
        }
        _ => println!("correlation undefined (all runs degenerate to zero)"),
    }
    println!("{} run(s) reported in {}", results.len(), out.join(REPORT_CSV).display());

    write_manifest(&out, "theorem-check", &s, &artifacts)?;
    Ok(())
}
