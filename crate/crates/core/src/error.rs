//! Crate-wide error type.

use thiserror::Error;

/// Errors surfaced by the library API.
#[derive(Debug, Error)]
pub enum Error {
    /// Input vector length does not match the model or dataset dimension.
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    /// An argument violates a documented requirement.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A caller-side precondition does not hold (e.g. querying a
    /// counterfactual for an already-favorable instance).
    #[error("precondition violated: {0}")]
    Precondition(String),

    /// A computation produced a non-finite intermediate value.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The oracle's query budget is exhausted.
    #[error("query budget exhausted after {used} queries")]
    BudgetExhausted { used: u64 },

    /// A serialized model or report payload is malformed.
    #[error("format error: {0}")]
    Format(String),

    /// An experiment configuration field is invalid. `path` locates the
    /// offending field (e.g. `schedule.per_step`).
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    /// A requested computation exceeds the configured resource budget.
    #[error("resource limit exceeded: {0}")]
    Resource(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
