use std::io;
use std::path::PathBuf;

use crate::store::FaultPoint;

/// Errors of the persistent store and the command-line layer.
#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error(transparent)]
    Core(#[from] bitforest_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    /// Committed data on disk is missing or does not match its checksums.
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("data directory {0} is locked by another process")]
    Locked(PathBuf),
    /// Configuration values conflict with the data directory or are malformed.
    #[error("configuration error: {0}")]
    Config(String),
    /// A record file could not be parsed.
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    /// A deliberately injected crash; the store must be dropped and reloaded.
    #[error("injected fault at {0:?}")]
    Injected(FaultPoint),
    /// The store hit an earlier failure and refuses further writes.
    #[error("store is unusable after an earlier failure; reload it")]
    Poisoned,
}

pub type StoreResult<T> = Result<T, StoreError>;

impl StoreError {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> StoreError {
        let path = path.into();
        move |source| StoreError::Io { path, source }
    }

    /// Process exit code: 1 for caller mistakes, 2 for storage failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            StoreError::Core(bitforest_core::Error::Integrity(_)) => 2,
            StoreError::Core(_)
            | StoreError::Config(_)
            | StoreError::Parse { .. }
            | StoreError::Locked(_) => 1,
            StoreError::Io { .. }
            | StoreError::Integrity(_)
            | StoreError::Injected(_)
            | StoreError::Poisoned => 2,
        }
    }
}
