//! Error types shared across the library.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument violated a precondition (dimension mismatch, empty input, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// An input was degenerate for the requested operation (e.g. normalizing
    /// the zero vector).
    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    /// A scalar argument fell outside the mathematical domain of a function.
    #[error("domain error: {0}")]
    Domain(String),

    /// The constraint set of a solve was judged empty.  Expected under
    /// post-quantization sign flips.
    #[error("infeasible after {iters} iterations (residual {residual:.3e})")]
    Infeasible { iters: usize, residual: f64 },

    /// A numerical procedure failed to reach its target accuracy.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A serialized record or fixture did not match the documented layout.
    #[error("format error: {0}")]
    Format(String),

    /// A recovery scheme failed inside one batch of the adaptive pipeline.
    #[error("scheme failure in batch {batch}: {source}")]
    Batch {
        batch: usize,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn in_batch(self, batch: usize) -> Self {
        Error::Batch {
            batch,
            source: Box::new(self),
        }
    }

    /// True when this error (or the batch error it wraps) is an infeasibility.
    pub fn is_infeasible(&self) -> bool {
        match self {
            Error::Infeasible { .. } => true,
            Error::Batch { source, .. } => source.is_infeasible(),
            _ => false,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
