use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// Argument outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),
    /// Inconsistent or invalid sizes.
    #[error("invalid dimensions: {0}")]
    Dimension(String),
    /// A parameter violates its documented constraint.
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    /// A feasible set is empty.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// Finite-time average extraction is impossible at a node.
    #[error("finite-time average cannot be extracted at node {node}: {reason}")]
    Extraction { node: usize, reason: String },
    /// An iterative method ran out of budget.
    #[error("no convergence: {0}")]
    NoConvergence(String),
    /// Configuration could not be parsed.
    #[error("config parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Error {
    Error::Invalid {
        field: field.into(),
        reason: reason.into(),
    }
}
