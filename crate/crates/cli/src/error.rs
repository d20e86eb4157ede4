//! CLI error taxonomy mapped to process exit codes.
//!
//! - usage errors (bad flags, bad config keys, out-of-range values) → 1
//! - data errors (missing/corrupt ink files, unreadable inputs) → 2
//! - internal errors (evaluation invariants violated) → 3
//!
//! Exit code 0 means the requested report was fully written.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
