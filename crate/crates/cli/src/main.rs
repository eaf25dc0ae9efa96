//! `bsw`: partition dumps, Besov norms, the inequality lab, linear solves and
//! shallow water runs.

mod commands;
mod config;
mod error;

use std::path::PathBuf;

use besov_sw::besov::Exponent;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "bsw", version, about = "Besov-space numerics for the viscous shallow water system")]
pub struct Cli {
    /// Master seed; overrides seeds in config files.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory receiving reports and field files.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Calibrated constants file from `lab calibrate`.
    #[arg(long, global = true)]
    pub constants: Option<PathBuf>,
    /// Replace existing output files.
    #[arg(long, global = true)]
    pub force: bool,
    #[arg(long, global = true, value_enum, default_value_t = LogLevel::Info)]
    pub log_level: LogLevel,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum LogLevel {
    Error,
    Info,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Littlewood-Paley partition tools.
    #[command(subcommand)]
    Lp(LpCommand),
    /// Besov norm of a field file.
    Norm(NormArgs),
    /// Inequality lab.
    #[command(subcommand)]
    Lab(LabCommand),
    /// Linear transport solves.
    Solve(SolveArgs),
    /// Shallow water runs.
    #[command(subcommand)]
    Swe(SweCommand),
}

#[derive(Args, Debug, Clone)]
pub struct GridArgs {
    #[arg(long, default_value_t = 64)]
    pub n: usize,
    /// Box side; defaults to 8 pi.
    #[arg(long)]
    pub length: Option<f64>,
}

#[derive(Subcommand, Debug)]
pub enum LpCommand {
    /// Write the partition multipliers along the positive k1 axis as CSV.
    DumpPartition(GridArgs),
}

#[derive(Args, Debug)]
pub struct NormArgs {
    /// Field file (`.bswf` or `.csv`), or a trajectory index (`.json`).
    #[arg(long)]
    pub field: PathBuf,
    /// Time exponent of the Chemin-Lerner norm for trajectories.
    #[arg(long)]
    pub rho: Option<Exponent>,
    #[arg(long)]
    pub s: f64,
    #[arg(long, default_value = "2")]
    pub p: Exponent,
    #[arg(long, default_value = "2")]
    pub r: Exponent,
}

#[derive(Subcommand, Debug)]
pub enum LabCommand {
    /// Run one check and write its report.
    Run(LabRunArgs),
    /// Derive the constants consumed by shallow water budgets.
    Calibrate(CalibrateArgs),
}

#[derive(Args, Debug)]
pub struct LabRunArgs {
    #[arg(long)]
    pub check: String,
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// JSON object overriding the check's default parameters.
    #[arg(long)]
    pub params: Option<String>,
    /// JSON object overriding the random field recipe.
    #[arg(long)]
    pub fields: Option<String>,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Args, Debug)]
pub struct CalibrateArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    #[arg(long, default_value_t = 8)]
    pub ensemble: usize,
    #[arg(long, default_value_t = 2.0)]
    pub s: f64,
    #[arg(long, default_value = "2")]
    pub p: Exponent,
    #[arg(long, default_value = "2")]
    pub r: Exponent,
    #[arg(long, default_value_t = 0.5)]
    pub nu: f64,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SolveKind {
    Transport,
    Tdiff,
}

#[derive(Args, Debug)]
pub struct SolveArgs {
    #[arg(value_enum)]
    pub kind: SolveKind,
    #[arg(long)]
    pub config: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum SweCommand {
    /// Successive approximations with budgets and contraction diagnostics.
    Iterate(SweArgs),
    /// Direct nonlinear solve.
    Direct(SweArgs),
    /// Long-time small-data run.
    Global(SweArgs),
}

#[derive(Args, Debug)]
pub struct SweArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Overrides the config horizon.
    #[arg(long)]
    pub horizon: Option<f64>,
}

fn main() {
    let cli = Cli::parse();
    let code = match commands::dispatch(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    };
    std::process::exit(code);
}
