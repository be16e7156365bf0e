use std::path::PathBuf;

use spinwig::{EngineError, ModelError, OracleError};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("cannot read config {path}: {source}")]
    ReadConfig { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("{diverged} of {n_traj} trajectories diverged")]
    Diverged { diverged: u64, n_traj: u64 },
    #[error("exact solver: {0}")]
    OracleLimit(OracleError),
    #[error("exact solver: {0}")]
    Oracle(OracleError),
    #[error("benchmark failed: {0}")]
    BenchmarkFailed(String),
}

impl CliError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::ReadConfig { .. } | CliError::Write { .. } => 2,
            CliError::Diverged { .. } => 3,
            CliError::OracleLimit(_) => 4,
            CliError::Oracle(_) | CliError::BenchmarkFailed(_) => 1,
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        match e {
            OracleError::DimensionLimit { .. } | OracleError::Unsupported(_) => CliError::OracleLimit(e),
            OracleError::Model(m) => CliError::Config(m.to_string()),
            other => CliError::Oracle(other),
        }
    }
}
