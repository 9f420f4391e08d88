//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument or configuration field was violated.
    /// The message names the offending field or argument.
    #[error("invalid argument: {0}")]
    Invalid(String),

    /// Shapes or lengths of numeric arguments do not line up.
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    /// A label, index, or size is outside its valid range.
    #[error("out of range: {0}")]
    OutOfRange(String),

    /// CSV ingestion failure, with the 1-based line it occurred on.
    #[error("csv error at line {line}: {msg}")]
    Csv { line: u64, msg: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    /// The data has no usable variance (e.g. PCA on constant features).
    #[error("degenerate data: {0}")]
    Degenerate(String),

    /// Dirichlet partitioning could not give every client a sample.
    #[error("partition retries exhausted: {clients} clients over {samples} samples after {retries} draws")]
    PartitionRetriesExhausted {
        clients: usize,
        samples: usize,
        retries: usize,
    },

    /// A loss or parameter became NaN/inf; training aborted.
    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    /// Divergence surfaced from inside a federated round, with context.
    #[error("divergence at round {round}, client {client}: {source}")]
    Divergence {
        round: usize,
        client: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub fn dim(msg: impl Into<String>) -> Self {
        Error::DimMismatch(msg.into())
    }

    pub fn non_finite(context: impl Into<String>) -> Self {
        Error::NonFinite {
            context: context.into(),
        }
    }

    /// True for errors that indicate numerical divergence rather than bad
    /// input; the CLI maps these to a distinct exit code.
    pub fn is_divergence(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. } | Error::Divergence { .. }
        )
    }
}
