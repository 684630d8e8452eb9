//! Command-line harness: model inspection, orbit and gain synthesis,
//! simulation runs, experiments and figure data regeneration.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use mlip::WalkingMode;
use serde::Serialize;

pub mod commands;
pub mod config;
pub mod figure;
pub mod output;

#[derive(Debug, Parser)]
#[command(
    name = "mlip",
    version,
    about = "Multi-domain LIP walking: step-to-step planning and simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Config JSON for the command; the built-in default is used when absent.
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Directory for CSV and JSON artifacts.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Override a config value by dotted path, e.g. `params.z0=0.9`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Seed for randomized initial errors.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Do not print the summary to stdout.
    #[arg(long, global = true)]
    pub quiet: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Step-to-step matrices at both sections and their structure check.
    Matrices,
    /// Periodic orbit and its one-cycle phase portrait.
    Orbit(OrbitArgs),
    /// Feedback gain and invariant error box.
    Gains,
    /// Run one closed-loop scenario.
    Simulate,
    /// Steady-state velocity tracking over a set of speeds.
    Sweep,
    /// Push recovery experiment.
    Push,
    /// Maximum stable speed per walking mode under a step-size limit.
    Maxspeed,
    /// Regenerate every figure data bundle.
    Figure,
}

#[derive(Debug, Clone, Default, Args)]
pub struct OrbitArgs {
    /// Desired velocity [m/s].
    #[arg(long = "v", allow_hyphen_values = true)]
    pub v: Option<f64>,
    #[arg(long)]
    pub mode: Option<WalkingMode>,
    /// Nominal step width [m]; selects the period-2 orbit.
    #[arg(long, allow_hyphen_values = true)]
    pub width: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ErrorKind {
    Schema,
    Numerical,
    Io,
    Internal,
}

#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    #[serde(rename = "error")]
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn schema(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Schema,
            message: message.into(),
        }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Numerical,
            message: message.into(),
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Self {
            kind: ErrorKind::Io,
            message: format!("{}: {e}", path.display()),
        }
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self {
            kind: ErrorKind::Internal,
            message: message.into(),
        }
    }

    /// 1 for bad input, 2 for numerical failure (singularity, divergence).
    pub fn exit_code(&self) -> i32 {
        match self.kind {
            ErrorKind::Numerical => 2,
            _ => 1,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": self.kind,
            "message": self.message,
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} error: {}", self.kind, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<mlip::Error> for CliError {
    fn from(e: mlip::Error) -> Self {
        match e {
            mlip::Error::InvalidParams(_) | mlip::Error::NonFinite(_) => {
                CliError::schema(e.to_string())
            }
            _ => CliError::numerical(e.to_string()),
        }
    }
}

/// Result of a command: the summary printed to stdout and the files written.
#[derive(Debug)]
pub struct RunOutput {
    pub summary: serde_json::Value,
    pub files: Vec<PathBuf>,
}

pub fn run(cli: &Cli) -> Result<RunOutput, CliError> {
    let input = cli.input.as_deref();
    let sets = &cli.overrides;
    match &cli.command {
        Command::Matrices => {
            commands::matrices(config::load(input, config::MATRICES, sets)?, &cli.out)
        }
        Command::Orbit(args) => {
            commands::orbit(config::load(input, config::ORBIT, sets)?, args, &cli.out)
        }
        Command::Gains => commands::gains(config::load(input, config::GAINS, sets)?, &cli.out),
        Command::Simulate => {
            let mut scenario: mlip::sim::Scenario = config::load(input, config::SIMULATE, sets)?;
            if let Some(seed) = cli.seed {
                scenario.seed = seed;
            }
            commands::simulate(scenario, &cli.out)
        }
        Command::Sweep => {
            let mut c: config::SweepConfig = config::load(input, config::SWEEP, sets)?;
            if let Some(seed) = cli.seed {
                c.scenario.seed = seed;
            }
            commands::sweep(c, &cli.out)
        }
        Command::Push => {
            let mut c: config::PushConfig = config::load(input, config::PUSH, sets)?;
            if let Some(seed) = cli.seed {
                c.scenario.seed = seed;
            }
            commands::push(c, &cli.out)
        }
        Command::Maxspeed => {
            commands::maxspeed(config::load(input, config::MAXSPEED, sets)?, &cli.out)
        }
        Command::Figure => {
            let mut c: config::FigureConfig = config::load(input, config::FIGURE, sets)?;
            if let Some(seed) = cli.seed {
                c.seed = seed;
            }
            figure::figure(c, &cli.out)
        }
    }
}
