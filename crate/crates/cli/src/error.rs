//! CLI error type mapping onto process exit codes.

use std::fmt;

/// Exit code 1: bad input (flags, files, schemas, capacity limits).
/// Exit code 2: a numerical self-check failed during an otherwise valid run.
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Numerical(_) => 2,
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        CliError::Validation(msg.into())
    }

    pub fn numerical(msg: impl Into<String>) -> Self {
        CliError::Numerical(msg.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(m) => write!(f, "error: {m}"),
            CliError::Numerical(m) => write!(f, "numerical failure: {m}"),
        }
    }
}

impl From<kdlab_core::KdError> for CliError {
    fn from(e: kdlab_core::KdError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Validation(format!("io: {e}"))
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Wrap a serde_json error with its source location (line/column).
pub fn json_error(context: &str, e: &serde_json::Error) -> CliError {
    CliError::Validation(format!(
        "{context}: {e} (line {}, column {})",
        e.line(),
        e.column()
    ))
}
