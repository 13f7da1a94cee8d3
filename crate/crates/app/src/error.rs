use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, AppError>;

#[derive(Debug, Error)]
pub enum AppError {
    #[error("cannot read or write {path}: {reason}")]
    IoFailure { path: PathBuf, reason: String },
    #[error("unsupported image format: {0}")]
    UnsupportedFormat(String),
    #[error("not a .flo file (bad magic)")]
    BadMagic,
    #[error("malformed input: {0}")]
    Malformed(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("benchmark invariants failed: {0}")]
    InvariantFailed(String),
    #[error(transparent)]
    Core(#[from] flowfill_core::Error),
}

impl AppError {
    pub(crate) fn io(path: impl Into<PathBuf>, e: impl ToString) -> Self {
        AppError::IoFailure {
            path: path.into(),
            reason: e.to_string(),
        }
    }
}
