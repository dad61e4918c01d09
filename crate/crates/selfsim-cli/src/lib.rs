//! Batch driver for the `selfsim` library: configuration, artifact writing and
//! the four experiment commands.

pub mod commands;
pub mod config;
pub mod output;

use thiserror::Error;

pub use commands::{run_evolve, run_profile, run_spectrum, run_sweep, Outcome};
pub use config::{ExperimentConfig, Overrides};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid configuration: {0}")]
    Validation(String),

    #[error("missing input: {0}")]
    Dependency(String),

    #[error("cannot write {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error(transparent)]
    Solver(#[from] selfsim::Error),
}

impl CliError {
    /// 2 for solver nonconvergence, 3 for bad input, missing files and I/O.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Solver(e) if e.is_nonconvergence() => 2,
            _ => 3,
        }
    }
}
