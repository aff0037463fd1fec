//! Experiment driver for convolutional recursive feature machines.
//!
//! Each subcommand resolves its settings (flags over config file over
//! defaults), runs one pipeline, writes artifacts plus a `manifest.txt`
//! into the output directory, and prints a short summary. Re-running a
//! command with `--config <out>/manifest.txt` reproduces the artifacts
//! byte for byte.

mod commands;
mod error;
mod settings;

use clap::{Args, Parser, Subcommand};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "convrfm-cli",
    version,
    about = "Convolutional kernel machines with learned patch operators"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic labeled dataset container
    GenData(commands::gen_data::GenDataArgs),
    /// Train a convolutional recursive feature machine
    Convrfm(commands::rfm::ConvrfmArgs),
    /// Train the layerwise deep variant
    DeepConvrfm(commands::deep::DeepArgs),
    /// Train the minimal CNN and checkpoint its weights
    TrainCnn(commands::cnn_train::TrainCnnArgs),
    /// Compare a trained CNN's filter Grams against its patch gradients
    VerifyAnsatz(commands::ansatz::AnsatzArgs),
    /// Check the one-step filter-Gram proportionality identity
    TheoremCheck(commands::theorem::TheoremArgs),
    /// Render eigenvector tiles and patch-operator heatmaps
    Visualize(commands::viz_cmd::VizArgs),
    /// Sweep methods across noise levels and report test accuracy
    Benchmark(commands::bench_cmd::BenchArgs),
}

/// Flags shared by every subcommand.
#[derive(Args)]
struct CommonArgs {
    /// Flat key=value config file; explicit flags override its entries
    #[arg(long)]
    config: Option<String>,
    /// Output directory for artifacts and the run manifest
    #[arg(long)]
    out: Option<String>,
    /// Worker-thread cap; 0 keeps the library default
    #[arg(long)]
    threads: Option<usize>,
}

fn dispatch(cli: Cli) -> error::CliResult<()> {
    match cli.command {
        Command::GenData(args) => commands::gen_data::run(args),
        Command::Convrfm(args) => commands::rfm::run(args),
        Command::DeepConvrfm(args) => commands::deep::run(args),
        Command::TrainCnn(args) => commands::cnn_train::run(args),
        Command::VerifyAnsatz(args) => commands::ansatz::run(args),
        Command::TheoremCheck(args) => commands::theorem::run(args),
        Command::Visualize(args) => commands::viz_cmd::run(args),
        Command::Benchmark(args) => commands::bench_cmd::run(args),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}
