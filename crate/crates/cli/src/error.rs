//! CLI error classes and their process exit codes.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Invalid flags, configuration or arguments (exit code 1).
    #[error("usage error: {0}")]
    Usage(String),
    /// Unreadable or malformed input, or unwritable output (exit code 2).
    #[error("data error: {0}")]
    Data(String),
    /// A numerical procedure failed (exit code 3).
    #[error("numerical error: {0}")]
    Numerical(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    /// Reclassifies domain errors raised while reading data as data errors.
    pub fn from_data(e: gcp::Error) -> Self {
        match e {
            gcp::Error::Domain(m) => CliError::Data(m),
            other => other.into(),
        }
    }
}

impl From<gcp::Error> for CliError {
    fn from(e: gcp::Error) -> Self {
        use gcp::Error as E;
        match e {
            E::Domain(_) => CliError::Usage(e.to_string()),
            E::Parse { .. } | E::Io(_) | E::Serde(_) => CliError::Data(e.to_string()),
            E::Numerical(_) | E::StepSize { .. } | E::Internal(_) => CliError::Numerical(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
