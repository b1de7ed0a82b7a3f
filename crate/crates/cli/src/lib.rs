//! Parameter sweeps, figure data and the validation suite behind the
//! `cascade-sub` command.

pub mod config;
pub mod experiments;
pub mod output;
pub mod validation;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] cascade_core::Error),
    #[error("cannot write {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("serialization failed: {0}")]
    Json(serde_json::Error),
}

impl CliError {
    /// 2 for configuration problems, 1 for everything that fails at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }
}
