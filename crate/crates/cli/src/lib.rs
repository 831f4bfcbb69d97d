//! The `mobsim` command-line workflows.
//!
//! Commands: `preprocess`, `synth`, `build-graphs`, `pretrain`, `train`,
//! `generate`, `evaluate`, `markov`, `report`, `ablate` and `rerun`.
//! Configuration comes from defaults, then an optional `--config` file,
//! then flags (see [`config`]). Every run writes a manifest (see
//! [`manifest`]) beside its outputs.
//!
//! Exit status: 0 on success, 1 for usage or validation errors (raised
//! before any work starts), 2 for runtime failures.

use std::ffi::OsString;
use std::path::Path;

use clap::error::ErrorKind;
use clap::Parser;
use thiserror::Error;

pub mod ablation;
pub mod args;
pub mod commands;
pub mod config;
pub mod manifest;

use args::{Cli, Command};
use config::RunConfig;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }
}

macro_rules! runtime_from {
    ($($t:ty),*) => {
        $(impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Runtime(e.to_string())
            }
        })*
    };
}

runtime_from!(
    mobsim_core::mobdata::DataError,
    mobsim_core::stgraphs::GraphError,
    mobsim_core::generator::ModelError,
    mobsim_core::trainer::TrainError,
    mobsim_core::metrics::MetricError
);

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match dispatch(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> Result<String, CliError> {
    if let Command::Rerun { manifest, out, verify } = command {
        return commands::rerun(&manifest, &out, verify);
    }
    let inv = command.invocation().expect("config-driven command");
    let cfg = RunConfig::load(inv.config.as_deref(), &inv.overrides)?;
    cfg.validate()?;
    commands::execute(inv.command, &cfg, &inv.out)
}
