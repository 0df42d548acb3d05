//! Command line and HTTP front end for `gameblend`.

pub mod cli;
pub mod config;
pub mod server;
pub mod session;

use thiserror::Error;

/// Command failures, each with its own exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments or configuration (exit 1).
    #[error("{0}")]
    Usage(String),
    /// Missing or malformed data files (exit 2).
    #[error("{0}")]
    Data(String),
    /// Training diverged (exit 3).
    #[error("{0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}
