//! `nlgram`: simulate, assemble Gramians, certify and synthesize steering
//! controls from a JSON configuration.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nlgram::{Error, ErrorKind};
use serde_json::{json, Value};

#[derive(Debug, Parser)]
#[command(
    name = "nlgram",
    version,
    about = "Trajectory Gramians and fixed-point control synthesis"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Debug, Args, Clone)]
pub struct Common {
    /// Gramian anchor: 1 = initial time, 2 = final time.
    #[arg(long, global = true, value_parser = clap::value_parser!(u8).range(1..=2))]
    pub which: Option<u8>,
    /// Margin in the admissible radius, in (0, 1).
    #[arg(long, global = true)]
    pub theta: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Write the report and CSV signals here.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Integrate the system under a control (zero if none is given).
    Simulate {
        config: PathBuf,
        #[arg(long)]
        control: Option<PathBuf>,
    },
    /// Assemble the trajectory Gramian at a control.
    Gramian {
        config: PathBuf,
        #[arg(long)]
        control: Option<PathBuf>,
    },
    /// Certify the target, then run the fixed-point synthesis.
    Synthesize {
        config: PathBuf,
        /// Comma-separated target state; overrides run.x1.
        #[arg(long)]
        target: Option<String>,
        /// Reference control CSV for the certificate.
        #[arg(long)]
        reference: Option<PathBuf>,
        /// Synthesize even when the target is not certified.
        #[arg(long)]
        force: bool,
    },
    /// Admissible radius around the zero control, a given reference or the
    /// best reference in the span of run.basis.
    Certify {
        config: PathBuf,
        #[arg(long)]
        target: Option<String>,
        #[arg(long, conflicts_with = "optimize_basis")]
        reference: Option<PathBuf>,
        #[arg(long)]
        optimize_basis: bool,
    },
    /// Freezing iteration for models with a modulation matrix.
    Freeze {
        config: PathBuf,
        #[arg(long)]
        target: Option<String>,
    },
    /// Windowed synthesis along straight-line waypoints.
    Window {
        config: PathBuf,
        #[arg(long)]
        target: Option<String>,
        #[arg(long)]
        windows: Option<usize>,
        #[arg(long)]
        force: bool,
    },
    /// Sample the declared bounds on a box and report violations.
    Bounds { config: PathBuf },
}

/// Failure carrying the error and any partial report worth printing.
pub struct Failure {
    pub error: Error,
    pub details: Option<Value>,
}

impl From<Error> for Failure {
    fn from(error: Error) -> Self {
        Self {
            error,
            details: None,
        }
    }
}

pub fn exit_code(kind: ErrorKind) -> u8 {
    match kind {
        ErrorKind::Input => 2,
        ErrorKind::Numeric => 3,
        ErrorKind::NotAdmissible => 4,
        ErrorKind::NotConverged => 5,
    }
}

fn error_json(f: &Failure) -> Value {
    let mut v = json!({
        "error": format!("{:?}", f.error.kind()),
        "message": f.error.to_string(),
    });
    match &f.error {
        Error::Outer { iteration, z, .. } => {
            v["iteration"] = json!(iteration);
            v["z"] = json!(z);
        }
        Error::Window { index, .. } => v["window"] = json!(index),
        Error::MaxIterations { deltas, .. } => v["deltas"] = json!(deltas),
        Error::MaxOuterIterations { residuals, .. } => v["residuals"] = json!(residuals),
        _ => {}
    }
    if let Some(d) = &f.details {
        v["details"] = d.clone();
    }
    v
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let c = &cli.common;
    let result = match &cli.command {
        Command::Simulate { config, control } => commands::simulate(config, control.as_deref(), c),
        Command::Gramian { config, control } => commands::gramian(config, control.as_deref(), c),
        Command::Synthesize {
            config,
            target,
            reference,
            force,
        } => commands::synthesize(config, target.as_deref(), reference.as_deref(), *force, c),
        Command::Certify {
            config,
            target,
            reference,
            optimize_basis,
        } => commands::certify(
            config,
            target.as_deref(),
            reference.as_deref(),
            *optimize_basis,
            c,
        ),
        Command::Freeze { config, target } => commands::freeze(config, target.as_deref(), c),
        Command::Window {
            config,
            target,
            windows,
            force,
        } => commands::window(config, target.as_deref(), *windows, *force, c),
        Command::Bounds { config } => commands::bounds(config, c),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!(
                "{}",
                serde_json::to_string_pretty(&error_json(&f)).unwrap_or_default()
            );
            ExitCode::from(exit_code(f.error.kind()))
        }
    }
}
