//! Error type shared by all modules of the crate.

use thiserror::Error;

/// Errors produced by the numerical and statistical routines.
#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its documented domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Input data violates a precondition (non-finite entries, asymmetry, ...).
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Operand shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A size guard tripped before allocating something unreasonable.
    #[error("resource limit exceeded: {0}")]
    ResourceLimit(String),

    /// The data are too degenerate for the statistic to be defined
    /// (for example a residual series with zero variance).
    #[error("degenerate data at node {node}: {detail}")]
    DegenerateData { node: String, detail: String },

    /// The requested operation is undefined at this dimension.
    #[error("unsupported dimension: {0}")]
    UnsupportedDimension(String),

    /// A configuration file could not be parsed.
    #[error("config error: {0}")]
    Config(String),

    /// Report or artifact could not be written.
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
