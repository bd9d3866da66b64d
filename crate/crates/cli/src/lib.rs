//! Command implementations behind the `modadv` binary.

pub mod config;
pub mod pipeline;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags or configuration; exit code 2.
    #[error("{0}")]
    Usage(String),

    /// Anything that went wrong while doing the work; exit code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl From<modadv::Error> for CliError {
    fn from(e: modadv::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub use config::RunConfig;
