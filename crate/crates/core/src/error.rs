//! Error types shared across the crate.
//!
//! Argument errors cover caller mistakes (bad dimensions, malformed
//! distribution specs, invalid brackets); resource errors cover exhausted
//! enumeration or event budgets; numeric errors cover quadrature or
//! optimization failures. The CLI maps argument errors to exit code 2 and
//! resource/numeric errors to exit code 3.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid argument supplied by the caller; the message names the
    /// offending parameter.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A dimension did not match the vertex it was paired with.
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// An enumeration or simulation exceeded its configured budget.
    #[error("resource budget exceeded: {0}")]
    Resource(String),

    /// A numeric routine failed to reach its tolerance.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// A bisection bracket whose endpoints do not straddle the transition.
    #[error("invalid bracket: {0}")]
    Bracket(String),

    /// A self-avoiding walk ran out of admissible moves.
    #[error("walk dead end at step {step} (dimension {dim})")]
    DeadEnd { step: usize, dim: usize },

    /// Output file could not be written.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Shorthand for an argument error.
    pub fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    /// Exit code the CLI uses for this error class.
    #[must_use]
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Argument(_) | Error::Dimension { .. } | Error::Bracket(_) => 2,
            _ => 3,
        }
    }
}
