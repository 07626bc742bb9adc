use std::fmt;
use std::process::ExitCode;

use dae_core::Error as CoreError;

/// Failure categories with their process exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Missing, unreadable or malformed files (exit 1).
    Io(String),
    /// Bad flags or incompatible inputs (exit 2).
    Usage(String),
    /// Numerical failure or degenerate data (exit 3).
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Io(_) => 1,
            CliError::Usage(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.code())
    }

    pub fn io(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        CliError::Io(format!("{context}: {err}"))
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Io(m) | CliError::Usage(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl std::error::Error for CliError {}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        let msg = e.to_string();
        match e {
            CoreError::Io(_) | CoreError::Format { .. } | CoreError::UnsupportedVersion { .. } => {
                CliError::Io(msg)
            }
            CoreError::DegenerateSpectrum
            | CoreError::Numerical(_)
            | CoreError::MetricUndefined { .. } => CliError::Numerical(msg),
            CoreError::Dimension { .. }
            | CoreError::EmptyInput(_)
            | CoreError::Contract(_)
            | CoreError::Argument(_)
            | CoreError::BatchTooSmall { .. }
            | CoreError::Size(_) => CliError::Usage(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
