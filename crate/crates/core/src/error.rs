//! Shared error type for the whole toolkit.

use thiserror::Error;

/// Errors surfaced by tensor math, model execution, conversion, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// Shapes do not conform for the requested operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A non-finite value reached an operation that requires finite inputs.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// A model is in the wrong state for the requested operation
    /// (e.g. running the quantized executor on an unquantized graph).
    #[error("state error: {0}")]
    State(String),

    /// The model cannot be converted to a spiking network as-is.
    #[error("convertibility error: {0}")]
    Convertibility(String),

    /// An argument is out of its documented domain.
    #[error("argument error: {0}")]
    Argument(String),

    /// Byte-level parse failure, with the offset where it was detected.
    #[error("parse error at byte {offset}: {detail}")]
    Parse { offset: usize, detail: String },

    /// Model container is damaged, truncated, or of an unknown version.
    #[error("container error: {0}")]
    Container(String),

    /// Training diverged (non-finite loss).
    #[error("training error: {0}")]
    Training(String),

    /// Compared artifacts do not describe the same network.
    #[error("topology mismatch: {0}")]
    Topology(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Convenience alias used across the crate.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Short machine-readable kind tag, stable across releases.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Numeric(_) => "numeric",
            Error::State(_) => "state",
            Error::Convertibility(_) => "convertibility",
            Error::Argument(_) => "argument",
            Error::Parse { .. } => "parse",
            Error::Container(_) => "container",
            Error::Training(_) => "training",
            Error::Topology(_) => "topology",
            Error::Io(_) => "io",
        }
    }
}
