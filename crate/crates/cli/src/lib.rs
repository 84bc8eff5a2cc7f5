//! Configuration, flux ingestion, result files and subcommand pipelines for
//! the `mission` command-line tool.

pub mod config;
pub mod flux;
pub mod output;
pub mod pipeline;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("missing upstream artifact {}; run the producing subcommand first", .0.display())]
    MissingArtifact(PathBuf),
    #[error("safety constraint not satisfied: {0}")]
    Infeasible(String),
    #[error("internal inconsistency: {0}")]
    Internal(String),
}

impl CliError {
    /// Process exit code.
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::MissingArtifact(_) => 2,
            CliError::Infeasible(_) => 3,
            CliError::Internal(_) => 4,
        }
    }
}
