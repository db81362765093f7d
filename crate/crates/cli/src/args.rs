use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use koopgram::gramians::Horizon;

#[derive(Debug, Parser)]
#[command(
    name = "koopgram",
    version,
    about = "Koopman/EDMD gramians and balanced truncation"
)]
pub struct Cli {
    /// Seed for randomized data generation; recorded in every JSON artifact.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Only log errors.
    #[arg(long, global = true)]
    pub quiet: bool,

    /// Emit log lines as JSON objects on stderr.
    #[arg(long, global = true)]
    pub json_logs: bool,

    /// Run data-parallel loops on one thread.
    #[arg(long, global = true)]
    pub sequential: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a system and write its trajectory as CSV.
    Simulate(SimulateArgs),
    /// Fit a lifted linear model from trajectory CSVs.
    Fit(FitArgs),
    /// Compute an observability or controllability gramian of a model.
    Gramians(GramianArgs),
    /// Balance a model given its gramian pair.
    Balance(BalanceArgs),
    /// Truncate a balanced realization.
    Reduce(ReduceArgs),
    /// Run one of the four worked examples end to end.
    Demo(DemoArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SystemArg {
    Example1,
    Example3,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InputArg {
    Zero,
    SinRamp,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Built-in system; use --config for linear systems or custom parameters.
    #[arg(long, required_unless_present = "config", conflicts_with = "config")]
    pub system: Option<SystemArg>,
    /// System configuration JSON.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Number of steps.
    #[arg(long = "T", value_parser = clap::value_parser!(u64).range(1..))]
    pub horizon: Option<u64>,
    #[arg(long, value_enum)]
    pub input: Option<InputArg>,
    /// Ramp slope of the sin-ramp input.
    #[arg(long, default_value_t = 0.01)]
    pub mu: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// Trajectory CSV files.
    #[arg(long, num_args = 1.., required = true)]
    pub traj: Vec<PathBuf>,
    /// Dictionary: `example1`, `identity`, or a dictionary spec JSON file.
    #[arg(long)]
    pub dict: String,
    /// Input dictionary: `identity`, `sin`, or a spec JSON file. Omit for an
    /// autonomous fit.
    #[arg(long)]
    pub input_dict: Option<String>,
    /// Ridge parameter; 0 gives the pseudoinverse solution.
    #[arg(long, default_value_t = 0.0)]
    pub zeta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Obs,
    Ctrl,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProjectArg {
    State,
}

#[derive(Debug, Args)]
pub struct GramianArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum)]
    pub kind: KindArg,
    /// Number of steps or `inf`.
    #[arg(long)]
    pub horizon: Horizon,
    #[arg(long, value_enum)]
    pub project: Option<ProjectArg>,
    /// Divide by the largest absolute entry.
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BalanceArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub xc: PathBuf,
    #[arg(long)]
    pub xo: PathBuf,
    /// Relative regularization applied when X_c is ill conditioned.
    #[arg(long)]
    pub eps_reg: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReduceArgs {
    #[arg(long)]
    pub bal: PathBuf,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub order: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
    pub example: u8,
    /// Report path; printed to stdout when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Directory for plot-ready CSV series.
    #[arg(long)]
    pub csv_dir: Option<PathBuf>,
    /// JSON file overriding entries of the threshold table.
    #[arg(long)]
    pub thresholds: Option<PathBuf>,
    /// Held-out initial state, comma separated.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub x0: Option<Vec<f64>>,
    /// Horizon of the Example 1 projected observability gramian.
    #[arg(long)]
    pub obs_horizon: Option<usize>,
}
