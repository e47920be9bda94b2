//! `cci-lab`: dataset generation, ACPO training, spectrum and sweep exports,
//! and the theory verification suites.
//!
//! Exit codes: 0 on success, 1 when a verification check fails or a solver
//! breaks down, 2 on bad flags or inputs.

mod commands;
mod output;
mod specs;

use std::path::PathBuf;
use std::process::ExitCode;

use cci_lab::theory::Suite;
use clap::{Args, Parser, Subcommand};

use crate::specs::{BehaviorSpec, MdpSpec};

#[derive(Debug, Parser)]
#[command(name = "cci-lab", version, about = "Exact tabular lab for CCI and ACPO")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Roll out a behavior policy and write a JSON-lines dataset.
    Gen(GenArgs),
    /// Train ACPO on a dataset and write trace.csv, checkpoint.json and manifest.json.
    Train(TrainArgs),
    /// Run a theory verification suite.
    Verify(VerifyArgs),
    /// Tabulate g(λ), g'(λ) and the regime over a λ grid.
    Spectrum(SpectrumArgs),
    /// Train over a grid of seeds, temperatures and initial multipliers.
    Sweep(SweepArgs),
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// gridworld:WxH, chain:N, random:SxA[:seed=K] or a .json path; `:gamma=G` sets the discount.
    #[arg(long)]
    pub mdp: MdpSpec,
    /// uniform, eps-greedy:E or random[:seed=K].
    #[arg(long, default_value = "uniform")]
    pub behavior: BehaviorSpec,
    /// Number of transitions.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 100)]
    pub horizon: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// JSON training config; omitted fields take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Evaluation MDP; defaults to the one recorded in the dataset header.
    #[arg(long)]
    pub mdp: Option<MdpSpec>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long, default_value = "all", value_parser = parse_suite)]
    pub suite: Suite,
    /// Instances per check family.
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Directory for reports.jsonl, summary.json and manifest.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Perturb the identity checks so they fail.
    #[arg(long, hide = true)]
    pub inject_fault: bool,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long, default_value_t = 0.1)]
    pub alpha: f64,
    /// Comma-separated λ values.
    #[arg(long, value_delimiter = ',', num_args = 1.., required = true)]
    pub lambdas: Vec<f64>,
    #[arg(long)]
    pub mdp: Option<MdpSpec>,
    /// Pseudo-count of the behavior fit.
    #[arg(long, default_value_t = 0.5)]
    pub smoothing: f64,
    /// Denominator guard of the practical-wBC threshold.
    #[arg(long, default_value_t = 0.01)]
    pub delta: f64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub mdp: Option<MdpSpec>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub seeds: Vec<u64>,
    /// Defaults to the config value.
    #[arg(long, value_delimiter = ',')]
    pub alphas: Vec<f64>,
    /// Defaults to the config value.
    #[arg(long, value_delimiter = ',')]
    pub lambda_inits: Vec<f64>,
    #[arg(long)]
    pub freeze_lambda: bool,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
    #[arg(long)]
    pub out: PathBuf,
}

fn parse_suite(s: &str) -> Result<Suite, String> {
    s.parse().map_err(|e: cci_lab::Error| e.to_string())
}

/// Result of a command that ran to completion.
pub enum Outcome {
    Success,
    ChecksFailed,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<cci_lab::Error>() {
        Some(cci_lab::Error::Solver(_) | cci_lab::Error::Inconsistent(_)) => 1,
        _ => 2,
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("ACPO_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Gen(args) => commands::gen::run(&args),
        Command::Train(args) => commands::train::run(&args),
        Command::Verify(args) => commands::verify::run(&args),
        Command::Spectrum(args) => commands::spectrum::run(&args),
        Command::Sweep(args) => commands::sweep::run(&args),
    };
    match result {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::ChecksFailed) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
