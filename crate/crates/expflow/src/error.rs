//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by operators, evaluators and integrators.
#[derive(Debug, Error)]
pub enum Error {
    /// A caller passed an invalid argument (dimension mismatch, non-finite input, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// The requested operation is not supported by this configuration
    /// (e.g. materializing a large matrix-free operator, phi index above the cap).
    #[error("unsupported operation: {0}")]
    Unsupported(String),

    /// A problem/solver configuration is inconsistent or incomplete.
    #[error("configuration error: {0}")]
    Config(String),

    /// A numerical kernel failed (overflow, eigensolver non-convergence, singular Pade denominator).
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The time integration failed (step size underrun, too many rejections, startup failure).
    #[error("integration failure: {0}")]
    Integration(String),

    /// A user callback reported an error.
    #[error("callback error: {0}")]
    Callback(String),

    /// Lookup of a named entity (scheme, problem) failed.
    #[error("unknown name `{name}`; known: {known}")]
    Lookup { name: String, known: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
    pub fn unsupported(msg: impl Into<String>) -> Self {
        Error::Unsupported(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
    pub fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
    pub fn integration(msg: impl Into<String>) -> Self {
        Error::Integration(msg.into())
    }
}
