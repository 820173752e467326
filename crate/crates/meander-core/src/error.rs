//! Error taxonomy shared across the crate.

use thiserror::Error;

use crate::sampler::RejectionReport;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// All failure modes surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument was outside the mathematical domain of the operation
    /// (non-finite input, point outside the cone, dimension mismatch, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// A series or iterative scheme did not reach its tolerance within the
    /// configured iteration budget.
    #[error("{context}: no convergence within {max_terms} terms")]
    Convergence { context: String, max_terms: usize },

    /// A numeric procedure failed structurally (bracketing, quadrature, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// An unsupported combination of options was requested.
    #[error("configuration error: {0}")]
    Config(String),

    /// A sampler could not produce a sample (horizon cap, degenerate path).
    #[error("sampling error: {0}")]
    Sampling(String),

    /// Rejection sampling ran out of attempts; the report carries the
    /// attempt statistics observed so far.
    #[error(
        "rejection sampling exhausted {} attempts without an acceptance; \
         consider a larger start radius or a higher attempt budget",
        report.attempts
    )]
    RejectionExhausted { report: RejectionReport },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
