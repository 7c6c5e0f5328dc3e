use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use std::path::PathBuf;

mod lqg_cmd;
mod nn_cmd;
mod output;

/// Alignment and merging of imitation-learned control policies.
#[derive(Parser, Debug)]
#[command(name = "fleetmerge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Flags shared by every subcommand.
#[derive(clap::Args, Debug, Clone)]
pub struct Common {
    /// TOML config file; missing sections and fields take their defaults
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Root seed, overriding the config's
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output file or directory
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate component pools and a Dirichlet partition into per-agent dataset files
    GenData(nn_cmd::GenDataArgs),
    /// Train a recurrent policy on one or more dataset files
    Train(nn_cmd::TrainArgs),
    /// Merge checkpoints into one
    Merge(nn_cmd::MergeArgs),
    /// Loss along the straight line between two checkpoints
    Barrier(nn_cmd::BarrierArgs),
    /// Run a full multi-agent experiment from a config
    Fedsim(nn_cmd::FedsimArgs),
    /// Linear-quadratic-Gaussian tools
    #[command(subcommand)]
    Lqg(lqg_cmd::LqgCommand),
    /// Check that random hidden-unit permutations leave a checkpoint's outputs unchanged
    CheckInvariance(nn_cmd::CheckInvarianceArgs),
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData(a) => nn_cmd::gen_data(a),
        Command::Train(a) => nn_cmd::train(a),
        Command::Merge(a) => nn_cmd::merge(a),
        Command::Barrier(a) => nn_cmd::barrier(a),
        Command::Fedsim(a) => nn_cmd::fedsim(a),
        Command::Lqg(c) => lqg_cmd::run(c),
        Command::CheckInvariance(a) => nn_cmd::check_invariance(a),
    }
}

/// Reads an experiment config (or defaults) and applies `--seed`.
pub fn experiment_config(common: &Common) -> Result<fleetmerge::harness::ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => fleetmerge::harness::ExperimentConfig::load(path).context("invalid experiment config")?,
        None => fleetmerge::harness::ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

pub fn require_out(common: &Common) -> Result<&PathBuf> {
    common.out.as_ref().context("--out is required for this command")
}
