use std::fmt;
use std::process::ExitCode;

/// CLI failure classes with a stable exit-code contract:
/// 0 success, 1 check/assertion failure, 2 usage/config error.
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Config(String),
    /// A verification or training-time check failed (gradient mismatch,
    /// non-finite loss, ...).
    Check(String),
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> ExitCode {
        match self {
            CliError::Check(_) => ExitCode::from(1),
            CliError::Usage(_) | CliError::Config(_) | CliError::Io(_) => ExitCode::from(2),
        }
    }

    pub fn io(context: &str, err: std::io::Error) -> CliError {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "usage error: {msg}"),
            CliError::Config(msg) => write!(f, "config error: {msg}"),
            CliError::Check(msg) => write!(f, "check failed: {msg}"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;
