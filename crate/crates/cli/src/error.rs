//! CLI error type and the exit-code mapping documented in the README:
//! 0 success, 2 input/format errors, 3 degenerate-data errors,
//! 1 anything else.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Malformed input files, unreadable paths, bad flags.
    #[error("{0}")]
    Input(String),

    /// The data are valid but too degenerate to analyze.
    #[error("{0}")]
    Degenerate(String),

    #[error("{0}")]
    Other(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Degenerate(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl From<matnet_core::Error> for CliError {
    fn from(e: matnet_core::Error) -> Self {
        use matnet_core::Error as E;
        match e {
            E::DegenerateData { .. } => CliError::Degenerate(e.to_string()),
            E::InvalidParameter(_)
            | E::InvalidInput(_)
            | E::DimensionMismatch(_)
            | E::UnsupportedDimension(_)
            | E::Config(_) => CliError::Input(e.to_string()),
            E::ResourceLimit(_) | E::Io(_) => CliError::Other(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Input(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;
