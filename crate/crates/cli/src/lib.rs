//! Scenario loading, subcommands, and file outputs for the `ergosafe`
//! command-line tool.

pub mod commands;
pub mod output;
pub mod scenario;

pub use scenario::{Scenario, ScenarioFile};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage error: {0}")]
    Usage(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
    #[error(transparent)]
    Invariant(#[from] ergosafe::Error),
}

impl CliError {
    /// 1 for usage, parse, and I/O errors; 2 for invalid problem data.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invariant(ergosafe::Error::Parse(_) | ergosafe::Error::Io(_)) => 1,
            CliError::Invariant(_) => 2,
            _ => 1,
        }
    }
}
