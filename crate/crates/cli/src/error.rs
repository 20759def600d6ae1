//! Error type of the experiment runner, split by exit code.
//!
//! Everything a user can fix in the invocation or the environment (bad
//! flags, unknown experiments, unreadable input files, unwritable output
//! directories) is a configuration error and exits with code 2. Failures of
//! the computation itself (divergence, overflow, stalled iterations) exit
//! with code 3.

use std::fmt;

use parafun::Error as CoreError;

/// Failure of an experiment run.
#[derive(Debug)]
pub enum CliError {
    /// Invalid configuration, input, or environment; exit code 2.
    Config(String),
    /// The numerical computation failed; exit code 3.
    Numeric(String),
}

impl CliError {
    /// Process exit code associated with the error.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numeric(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(detail) => write!(f, "{detail}"),
            CliError::Numeric(detail) => write!(f, "numeric failure: {detail}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(err: CoreError) -> Self {
        match err {
            // Blow-ups, singular systems and stalls are failures of the run
            // itself; everything else means the resolved problem was
            // malformed, which a different configuration can fix.
            CoreError::Numeric { .. }
            | CoreError::Singular { .. }
            | CoreError::NotSpd { .. }
            | CoreError::Stalled { .. } => CliError::Numeric(err.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

/// Convenience alias for fallible runner operations.
pub type CliResult<T> = Result<T, CliError>;
