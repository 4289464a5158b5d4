//! `anchorloc` command-line interface.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 numerical divergence.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "anchorloc", version, about = "Anchor-point camera relocalization")]
pub struct Cli {
    /// Run configuration (TOML). Flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// One seed for the world, the network initialization and the shuffle.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset directory.
    GenWorld(GenWorldArgs),
    /// Train the anchor model on a dataset directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on the test split of a dataset directory.
    Eval(EvalArgs),
    /// Train and evaluate one model per frame interval.
    SweepAnchors(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenWorldArgs {
    #[arg(long)]
    pub n_train: Option<usize>,
    #[arg(long)]
    pub n_test: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// Frame interval between anchors.
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Add the nearest-anchor cross-entropy term.
    #[arg(long, conflicts_with = "no_cross_entropy")]
    pub cross_entropy: bool,
    /// Drop the nearest-anchor cross-entropy term.
    #[arg(long)]
    pub no_cross_entropy: bool,
    /// Continue from a checkpoint that carries optimizer state.
    #[arg(long, value_name = "FILE")]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// Frame interval, used when the checkpoint carries no anchor map.
    #[arg(long)]
    pub k: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long, value_name = "DIR")]
    pub dataset: Option<PathBuf>,
    /// Frame intervals, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub k: Option<Vec<usize>>,
    #[arg(long)]
    pub epochs: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
