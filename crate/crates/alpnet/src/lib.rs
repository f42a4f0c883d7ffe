//! Scenario files, seeded generation, phase scheduling and trace output for
//! the `alpnet-core` algorithms.

pub mod commands;
pub mod generate;
pub mod scenario;
pub mod schedule;
pub mod trace;

pub use alpnet_core as core;

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] alpnet_core::Error),
    #[error("{path}: {reason}")]
    Validation { path: String, reason: String },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scenario file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("trace: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn validation(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::Validation {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
