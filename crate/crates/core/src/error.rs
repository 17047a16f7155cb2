use std::path::PathBuf;

use thiserror::Error;

use crate::hooks::HookError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("validation failed: {0}")]
    Validation(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("unknown {kind} `{id}`")]
    NotFound { kind: &'static str, id: String },

    #[error("supersession cycle: {0}")]
    Cycle(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("bi-temporal window violation: {0}")]
    Window(String),

    #[error(transparent)]
    Hook(#[from] HookError),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("unsupported log format: {0}")]
    Format(String),

    #[error("corrupt substrate: {0}")]
    Corrupt(String),

    #[error("substrate at {0} is locked by another writer")]
    Locked(PathBuf),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn not_found(kind: &'static str, id: impl ToString) -> Self {
        Error::NotFound {
            kind,
            id: id.to_string(),
        }
    }
}
