//! Command-line interface.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands;
use crate::error::CliResult;

#[derive(Debug, Parser)]
#[command(name = "tqs", version, about = "Transformer quantum states for 1D spin-chain families")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Pretrain on the family described by a config file.
    Train(TrainArgs),
    /// Continue training a checkpoint at a single parameter point.
    FineTune(FineTuneArgs),
    /// Energies and magnetization over a grid of sizes and couplings.
    Scan(ScanArgs),
    /// Maximum-likelihood couplings from a measurement file.
    Predict(PredictArgs),
    /// Binder crossings and the order-parameter scaling exponent.
    Fss(FssArgs),
    /// Exact reference solvers.
    #[command(subcommand)]
    Oracle(OracleCommand),
}

#[derive(Debug, Subcommand)]
pub enum OracleCommand {
    /// Exact-diagonalization ground energies.
    Ed(OracleArgs),
    /// Free-fermion TFI ground energies.
    Ff(OracleArgs),
    /// Measurement files sampled from exact ground states.
    Measure(MeasureArgs),
}

#[derive(Debug, Clone, Args)]
pub struct SamplingArgs {
    /// Batch size N_batch.
    #[arg(long)]
    pub n_batch: Option<u64>,
    /// Cap on distinct sampled strings N_unique.
    #[arg(long)]
    pub n_unique: Option<usize>,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Resume from this checkpoint.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Output directory; defaults to the config's output_dir.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    /// Fill the log's seconds column (makes the log non-reproducible).
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct FineTuneArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Config with [fine_tune], [trainer] and optionally [sampler] sections.
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[arg(long)]
    pub timing: bool,
}

#[derive(Debug, Clone, Args)]
pub struct ScanArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// System sizes, e.g. 10,16,20.
    #[arg(long)]
    pub sizes: String,
    /// Coupling values: a list or lo:hi:step.
    #[arg(long)]
    pub h_grid: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    /// Independent batches per grid point.
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
}

#[derive(Debug, Clone, Args)]
pub struct PredictArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub measurements: PathBuf,
    /// Search box per varying coupling, lo:hi, comma separated; defaults to the priors.
    #[arg(long = "box")]
    pub search_box: Option<String>,
    /// Subsample sizes; each gets 10 seeded subsamples.
    #[arg(long)]
    pub sweep: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct FssArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub sizes: String,
    #[arg(long)]
    pub h_grid: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub sampling: SamplingArgs,
    #[arg(long, default_value_t = 10)]
    pub repeats: usize,
}

#[derive(Debug, Clone, Args)]
pub struct OracleArgs {
    /// Config whose [family] section names the model and fixed parameters.
    #[arg(long)]
    pub config: PathBuf,
    /// Defaults to the family's size set.
    #[arg(long)]
    pub sizes: Option<String>,
    #[arg(long)]
    pub h_grid: String,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct MeasureArgs {
    #[command(flatten)]
    pub oracle: OracleArgs,
    /// Records per file.
    #[arg(long, default_value_t = 1000)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

pub fn run(cli: &Cli) -> CliResult<()> {
    match &cli.command {
        Command::Train(a) => commands::train(a),
        Command::FineTune(a) => commands::fine_tune(a),
        Command::Scan(a) => commands::scan(a),
        Command::Predict(a) => commands::predict(a),
        Command::Fss(a) => commands::fss(a),
        Command::Oracle(OracleCommand::Ed(a)) => commands::oracle_energies(a, commands::Solver::Ed),
        Command::Oracle(OracleCommand::Ff(a)) => commands::oracle_energies(a, commands::Solver::Ff),
        Command::Oracle(OracleCommand::Measure(a)) => commands::oracle_measure(a),
    }
}
