//! Command-line front end for the `ttnn` library: train and evaluate
//! networks with tensor-train layers, compress dense matrices, verify
//! gradients, and benchmark kernels.
//!
//! Every flag mirrors a config-file key (see [`config`]); flags override
//! file values and the fully resolved configuration is echoed into the
//! output directory.

pub mod commands;
pub mod config;
pub mod matfile;
pub mod netspec;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(
    name = "ttnn",
    version,
    about = "Tensor-train layers: train, evaluate, compress, verify, benchmark"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a configured network; writes metrics.csv, a checkpoint, and
    /// the resolved config into the output directory.
    Train(TrainArgs),
    /// Evaluate a checkpoint on a dataset split and print its error rate.
    Eval(EvalArgs),
    /// Factorize a dense matrix into tensor-train form, or report the
    /// parameter budget of a factorized shape.
    Compress(CompressArgs),
    /// Check analytic layer gradients against central finite differences.
    Gradcheck(GradcheckArgs),
    /// Time a tensor-train matrix product against its dense equivalent.
    Bench(BenchArgs),
}

/// Flags shared by every subcommand.
#[derive(Debug, Args, Default)]
pub struct CommonArgs {
    /// Flat `key = value` config file; any flag overrides its file key.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Seed for every random choice (init, shuffling, synthetic data).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Upper bound on kernel parallelism.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Directory for metrics, checkpoints, and the resolved config.
    #[arg(long, value_name = "DIR")]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Directory with the four MNIST-layout idx files.
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Number of passes over the training set.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Minibatch size.
    #[arg(long)]
    pub batch_size: Option<usize>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Checkpoint file written by `train` or `compress`.
    #[arg(long, value_name = "FILE")]
    pub checkpoint: Option<PathBuf>,
    /// Directory with the four MNIST-layout idx files.
    #[arg(long, value_name = "DIR")]
    pub data_dir: Option<PathBuf>,
    /// Which split to score: train or test.
    #[arg(long)]
    pub split: Option<String>,
    /// Score only the first N samples.
    #[arg(long, value_name = "N")]
    pub limit: Option<usize>,
}

#[derive(Debug, Args)]
pub struct CompressArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Row dimension factors, e.g. 4,4,4,4,4,4.
    #[arg(long, value_name = "LIST")]
    pub row_modes: Option<String>,
    /// Column dimension factors, e.g. 2,7,8,8,7,4.
    #[arg(long, value_name = "LIST")]
    pub col_modes: Option<String>,
    /// Cap every internal rank at this value.
    #[arg(long)]
    pub rank: Option<usize>,
    /// Relative Frobenius error budget for the factorization.
    #[arg(long)]
    pub eps: Option<f64>,
    /// Dense matrix file (u64 rows, u64 cols, column-major f64, all
    /// little-endian). Without it, only the parameter budget is reported.
    #[arg(long, value_name = "FILE")]
    pub matrix: Option<PathBuf>,
    /// Write the factorized matrix as a single-layer checkpoint.
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Row dimension factors of the checked layer.
    #[arg(long, value_name = "LIST")]
    pub row_modes: Option<String>,
    /// Column dimension factors of the checked layer.
    #[arg(long, value_name = "LIST")]
    pub col_modes: Option<String>,
    /// Internal ranks (one value broadcasts).
    #[arg(long, value_name = "LIST")]
    pub ranks: Option<String>,
    /// Number of input columns to differentiate through.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Central-difference step size.
    #[arg(long)]
    pub step: Option<f64>,
    /// Maximum allowed relative deviation.
    #[arg(long)]
    pub tolerance: Option<f64>,
    /// Add this value to one analytic gradient entry (negative control:
    /// a large value must make the check fail).
    #[arg(long)]
    pub perturb: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Row dimension factors of the benchmarked matrix.
    #[arg(long, value_name = "LIST")]
    pub row_modes: Option<String>,
    /// Column dimension factors of the benchmarked matrix.
    #[arg(long, value_name = "LIST")]
    pub col_modes: Option<String>,
    /// Internal ranks (one value broadcasts).
    #[arg(long, value_name = "LIST")]
    pub ranks: Option<String>,
    /// Number of input columns per product.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Timed repetitions; the median is reported.
    #[arg(long)]
    pub reps: Option<usize>,
    /// Untimed repetitions discarded before measuring.
    #[arg(long)]
    pub warmup: Option<usize>,
    /// Skip the dense baseline (useful for very large shapes).
    #[arg(long)]
    pub no_dense: bool,
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => commands::train::run(&args),
        Command::Eval(args) => commands::eval::run(&args),
        Command::Compress(args) => commands::compress::run(&args),
        Command::Gradcheck(args) => commands::gradcheck::run(&args),
        Command::Bench(args) => commands::bench::run(&args),
    }
}
