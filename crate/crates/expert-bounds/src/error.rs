//! Shared error type for the toolkit.

use crate::model::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, thiserror::Error)]
pub enum Error {
    /// Non-finite or out-of-range raw input.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Argument outside an operation's documented domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A hard precondition check failed; the full report is attached.
    #[error("validation failed: {}", .0.summary_line())]
    Validation(ValidationReport),

    /// The observed marginals admit no population under the stated assumptions.
    #[error("infeasible: {0}")]
    Infeasible(String),

    /// Missing prerequisite (e.g. joint law required but absent).
    #[error("precondition not met: {0}")]
    Precondition(String),

    /// The LP solver could not certify a result.
    #[error("solver failure: {0}")]
    Solver(String),

    /// Rejection sampling exhausted its budget.
    #[error("generation failure: {0}")]
    Generation(String),

    /// A required estimation cell is empty or malformed.
    #[error("estimation error: {0}")]
    Estimation(String),

    /// Bootstrap could not produce a usable interval.
    #[error("inference error: {0}")]
    Inference(String),

    /// Malformed record stream.
    #[error("format error at line {line}: {message}")]
    Format { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
