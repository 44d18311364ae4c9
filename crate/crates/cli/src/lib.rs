//! Experiment harness behind the `qmaxent` binary.
//!
//! [`commands::solve`], [`commands::bench`] and [`commands::diagnose`] run a
//! validated [`ExperimentConfig`] and write their artifacts under its output
//! directory:
//!
//! * `traces/<cell>.csv` with columns `iter,gap,residual,wall_ns`
//! * `traces/<cell>.lambda.json` with `lambda` every 10 iterations and at the end
//! * `summary.json`, plus `table.md` for `bench`
//! * `diagnostics/<instance>.json` for `diagnose`

pub mod commands;
pub mod config;
pub mod output;

pub use config::{ExperimentConfig, MethodSpec};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("I/O error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
