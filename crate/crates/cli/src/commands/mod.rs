//! One module per command group. Each command reads its parameters from the
//! config's `params` object and fills an [`ExperimentResult`].

mod abp;
mod barrier;
mod constants;
mod kernel;
mod solve;

use aniso_nonlocal::{AnisotropyProfile, QuadratureSettings};
use serde::de::DeserializeOwned;

use crate::config::{Command, RunConfig};
use crate::result::ExperimentResult;
use crate::CliError;

pub fn dispatch(cfg: &RunConfig, command: Command) -> Result<ExperimentResult, CliError> {
    match command {
        Command::Constants => constants::run(cfg),
        Command::BarrierVerify => barrier::run(cfg),
        Command::Envelope => abp::envelope(cfg),
        Command::AbpCover => abp::cover(cfg),
        Command::Cz => abp::cz(cfg),
        Command::Solve => solve::solve(cfg),
        Command::Harnack => solve::harnack(cfg),
        Command::Decay => solve::decay(cfg),
        Command::Sweep => solve::sweep(cfg),
        Command::KernelCheck => kernel::run(cfg),
    }
}

fn start(cfg: &RunConfig, command: Command) -> ExperimentResult {
    ExperimentResult::new(command.name(), cfg.digest(), cfg.seed)
}

fn profile(cfg: &RunConfig) -> Result<AnisotropyProfile, CliError> {
    cfg.profile.build().map_err(|e| CliError::Config(format!("profile: {e}")))
}

fn params<T: DeserializeOwned>(cfg: &RunConfig) -> Result<T, CliError> {
    cfg.params().map_err(|e| CliError::Config(format!("params: {e}")))
}

/// The configured quadrature, or `fallback` with its seed mixed into the run seed.
fn quadrature(cfg: &RunConfig, fallback: QuadratureSettings) -> QuadratureSettings {
    match &cfg.quadrature {
        Some(q) => q.settings(cfg.seed ^ fallback.seed),
        None => QuadratureSettings { seed: cfg.seed ^ fallback.seed, ..fallback },
    }
}

/// Column names `prefix0, prefix1, …`.
fn axis_columns(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}
