use thiserror::Error;

/// Errors raised by the testing procedures and their numerical building blocks.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument is outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Input data violates a precondition (empty, unsorted, out of range).
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A root finder could not bracket a positive root.
    #[error("no positive root: {0}")]
    NoRoot(String),
    /// A simulation scenario failed validation; one entry per violation.
    #[error("invalid scenario: {}", .0.join("; "))]
    Scenario(Vec<String>),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
