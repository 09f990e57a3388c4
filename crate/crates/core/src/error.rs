use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    /// A mesh or partition violates a geometric invariant.
    #[error("geometry: {0}")]
    Geometry(String),

    #[error("internal consistency: {0}")]
    Consistency(String),

    /// Cholesky factorization hit a non-positive pivot.
    #[error("indefinite system in {what} (pivot {pivot:.3e} at row {row})")]
    Indefinite { what: String, row: usize, pivot: f64 },

    #[error("numerical breakdown: {0}")]
    Breakdown(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn geometry(msg: impl Into<String>) -> Self {
        Error::Geometry(msg.into())
    }

    pub(crate) fn consistency(msg: impl Into<String>) -> Self {
        Error::Consistency(msg.into())
    }

    /// Rename the object an indefiniteness error refers to.
    pub fn with_context(self, what: impl Into<String>) -> Self {
        match self {
            Error::Indefinite { row, pivot, .. } => Error::Indefinite {
                what: what.into(),
                row,
                pivot,
            },
            other => other,
        }
    }
}
