//! `wanify` command-line driver.

mod cmd;
mod manifest;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "wanify", version, about = "WAN bandwidth prediction and connection planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a simulator configuration for a preset or random topology.
    GenTopology(cmd::GenTopologyArgs),
    /// Simulate a measurement campaign and write a training dataset.
    GenDataset(cmd::GenDatasetArgs),
    /// Train a bandwidth predictor on a dataset.
    Train(cmd::TrainArgs),
    /// Predict the runtime bandwidth matrix from snapshot probes.
    Predict(cmd::PredictArgs),
    /// Infer DC relations and build the connection plan.
    Plan(cmd::PlanArgs),
    /// Run local agents against the simulator.
    Simulate(cmd::SimulateArgs),
    /// Compare the planner against exhaustive search on a small world.
    Oracle(cmd::OracleArgs),
    /// Report annual monitoring costs.
    Cost(cmd::CostArgs),
}

/// Flags shared by simulator-backed subcommands.
#[derive(Debug, Args)]
pub struct SimFlags {
    /// Simulator configuration JSON.
    #[arg(long)]
    pub config: std::path::PathBuf,
    /// Overrides the configuration seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the fluctuation sigma (0 disables noise).
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug)]
pub enum CliError {
    /// Bad input: unreadable or invalid files, arguments out of range.
    Input(String),
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Internal(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) => write!(f, "input error: {m}"),
            CliError::Internal(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<wanify::Error> for CliError {
    fn from(e: wanify::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Internal(e.to_string())
        }
    }
}

pub type CliResult<T = ()> = Result<T, CliError>;

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("WANIFY_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::GenTopology(a) => cmd::gen_topology(a),
        Command::GenDataset(a) => cmd::gen_dataset(a),
        Command::Train(a) => cmd::train(a),
        Command::Predict(a) => cmd::predict(a),
        Command::Plan(a) => cmd::plan(a),
        Command::Simulate(a) => cmd::simulate(a),
        Command::Oracle(a) => cmd::oracle(a),
        Command::Cost(a) => cmd::cost(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wanify: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
