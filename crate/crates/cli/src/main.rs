//! `auxnet` command-line front end.
//!
//! Exit codes: 0 success, 2 usage or input error, 3 runtime failure.

mod commands;
mod config;
mod rundir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use auxnet::Error;

#[derive(Parser, Debug)]
#[command(name = "auxnet", version, about = "Train and evaluate sparse convolutional event classifiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic store, event list and ground-truth metadata.
    GenData(Common),
    /// Train one model and write its checkpoint, history and metrics.
    Train(Common),
    /// Train every grid setting and rank them on held-out validation data.
    Grid {
        #[command(flatten)]
        common: Common,
        /// Worker threads for the grid.
        #[arg(long, default_value_t = 1)]
        parallel: usize,
    },
    /// Evaluate a checkpoint on one split of a store.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Sparsity report and filter export for a checkpoint.
    Report {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Number of largest-norm filters to export.
        #[arg(long)]
        top_k: Option<usize>,
    },
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Parent directory for run directories.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// `key=value` override; may be repeated. Flags win over the file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

/// Failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Failure {
            code: 3,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Diverged { .. } | Error::NoConvergence { .. } | Error::NonFinite(_) | Error::Cache { .. } => {
                Failure::runtime(e.to_string())
            }
            _ => Failure::usage(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::GenData(c) => commands::gen_data(&c),
        Command::Train(c) => commands::train(&c),
        Command::Grid { common, parallel } => commands::grid(&common, parallel),
        Command::Eval { common, checkpoint } => commands::eval(&common, checkpoint),
        Command::Report {
            common,
            checkpoint,
            top_k,
        } => commands::report(&common, checkpoint, top_k),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
