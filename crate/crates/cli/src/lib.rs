//! Command-line front end for `tds-core`: decomposition, sharpening,
//! parameter tuning, synthetic data and the benchmark harness.

pub mod bench;
pub mod commands;
pub mod phantom;

use thiserror::Error;

use tds_core::TdsError;

pub use commands::{run, Cli, Command};

pub const EXIT_OK: u8 = 0;
pub const EXIT_DATA: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_NUMERICAL: u8 = 3;
pub const EXIT_EXHAUSTED: u8 = 4;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Tds(#[from] TdsError),
    #[error("tuning exhausted: no lambda up to {max_lambda} brought {metric} within {eps} of {target}")]
    Exhausted {
        metric: &'static str,
        target: f64,
        eps: f64,
        max_lambda: f64,
    },
    #[error("{failed} benchmark rows failed")]
    BenchFailures { failed: usize },
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Exhausted { .. } => EXIT_EXHAUSTED,
            CliError::BenchFailures { .. } => EXIT_NUMERICAL,
            CliError::Tds(e) => match e {
                TdsError::Parameter(_) | TdsError::Config(_) => EXIT_USAGE,
                TdsError::Numerical(_)
                | TdsError::NotConverged { .. }
                | TdsError::TooLarge { .. }
                | TdsError::Statistics(_) => EXIT_NUMERICAL,
                TdsError::Dimension(_)
                | TdsError::ShapeMismatch { .. }
                | TdsError::Index { .. }
                | TdsError::Data(_)
                | TdsError::Parse { .. }
                | TdsError::Io(_) => EXIT_DATA,
            },
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Tds(e.into())
    }
}
