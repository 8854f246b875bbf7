//! `mfac-lab`: runs the benchmark experiments and writes CSV logs, summaries
//! and SVG plots.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 closed-loop divergence,
//! 3 configuration or usage error.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod loops;
mod plot;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{Experiment, ExperimentConfig, Overrides};
use run::RunError;

#[derive(Parser)]
#[command(name = "mfac-lab", version, about = "Model-free adaptive control experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Three controllers on the two-input two-output nonlinear benchmark plant.
    Example1(Common),
    /// Inverse-kinematics tracking of a straight Cartesian path on the six-axis arm.
    Example2(Common),
    /// Ramp static error and closed-loop roots over a λ grid.
    Sweep(Common),
    /// Characteristic roots of one frozen loop, cross-checked by simulation.
    Stability(Common),
}

#[derive(Args)]
struct Common {
    /// TOML configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output root; defaults to $MFAC_LAB_OUT, then ./runs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Number of simulation steps.
    #[arg(long)]
    steps: Option<usize>,
    /// Weighting factor λ (upper end of the grid for `sweep`).
    #[arg(long)]
    lambda: Option<f64>,
}

fn execute(exp: Experiment, args: Common) -> Result<String, RunError> {
    let cfg = match &args.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    let ov = Overrides {
        out: args.out,
        steps: args.steps,
        lambda: args.lambda,
    };
    let cfg = cfg.resolve(exp, &ov)?;
    run::run(exp, &cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 3 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let (exp, args) = match cli.command {
        Command::Example1(a) => (Experiment::Example1, a),
        Command::Example2(a) => (Experiment::Example2, a),
        Command::Sweep(a) => (Experiment::Sweep, a),
        Command::Stability(a) => (Experiment::Stability, a),
    };
    match execute(exp, args) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mfac-lab {}: {e}", exp.id());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
