mod artifact;
mod config;
mod diagnose;
mod error;
mod fit;
mod predict;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Parser, Debug)]
#[command(name = "cspbart", version, about = "Semi-parametric Bayesian additive regression trees")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit a model to a data file and write a model directory.
    Fit(fit::FitArgs),
    /// Posterior-mean predictions of a fitted model for new rows.
    Predict(predict::PredictArgs),
    /// Run the replicate bias study on synthetic data.
    Simulate(simulate::SimulateArgs),
    /// Summaries, interaction counts and move statistics of a fitted model.
    Diagnose(diagnose::DiagnoseArgs),
}

/// Sampler settings shared by `fit` and `simulate`.
#[derive(Args, Debug, Clone, Default)]
pub struct SamplerArgs {
    /// Number of trees.
    #[arg(long)]
    pub trees: Option<usize>,
    /// Total MCMC iterations, burn-in included.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    /// Leaf prior scale divisor.
    #[arg(long)]
    pub k: Option<f64>,
    /// Tree depth prior base.
    #[arg(long)]
    pub eta: Option<f64>,
    /// Tree depth prior exponent.
    #[arg(long)]
    pub zeta: Option<f64>,
    /// Error variance prior degrees of freedom.
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Key = value file; flags take precedence over its entries.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result: Result<(), CliError> = match cli.command {
        Command::Fit(a) => fit::run(a),
        Command::Predict(a) => predict::run(a),
        Command::Simulate(a) => simulate::run(a),
        Command::Diagnose(a) => diagnose::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
