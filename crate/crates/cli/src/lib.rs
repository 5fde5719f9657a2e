//! Batch front-end for the `aniso-nonlocal` experiments: a JSON config in,
//! `results.json`, `data.csv` and plot-ready series out.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod commands;
pub mod config;
pub mod instances;
pub mod result;

use std::fmt::Display;
use std::io;

use thiserror::Error;

pub use config::{Command, RunConfig};
pub use result::ExperimentResult;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn config(e: impl Display) -> Self {
        CliError::Config(e.to_string())
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io(_) => "io",
        }
    }
}

/// Exit status for a configuration or I/O failure.
pub const EXIT_CONFIG: i32 = 2;

/// Runs `command` on `config`. The config's own `command`, when present, must agree.
pub fn run(config: &RunConfig, command: Command) -> Result<ExperimentResult, CliError> {
    if let Some(c) = config.command {
        if c != command {
            return Err(CliError::Config(format!("config is for {c}, asked to run {command}")));
        }
    }
    commands::dispatch(config, command)
}
