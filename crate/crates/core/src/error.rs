use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: {left} vs {right}")]
    DimensionMismatch {
        context: &'static str,
        left: usize,
        right: usize,
    },

    #[error("non-finite value in {context} at coordinate {index}")]
    NonFinite { context: &'static str, index: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: no interactions")]
    EmptyDataset(PathBuf),

    #[error("attribute table {path} has {found} rows, expected {expected}")]
    RowCount {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("user {user} has {count} interactions, at least 3 are required")]
    InsufficientHistory { user: usize, count: usize },

    #[error("user {user}: requested {requested} negatives but only {available} candidates exist")]
    InsufficientNegatives {
        user: usize,
        requested: usize,
        available: usize,
    },

    #[error("cannot form {k} clusters from {n} points")]
    TooManyClusters { k: usize, n: usize },

    #[error("aggregation needs at least one update")]
    EmptyAggregation,

    #[error("parameter layouts differ")]
    LayoutMismatch,

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line driver.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidArgument(_) | Error::TooManyClusters { .. } => 1,
            Error::Parse { .. }
            | Error::EmptyDataset(_)
            | Error::RowCount { .. }
            | Error::InsufficientHistory { .. }
            | Error::InsufficientNegatives { .. }
            | Error::Io { .. }
            | Error::Csv { .. }
            | Error::Json { .. } => 2,
            Error::NonFinite { .. }
            | Error::DimensionMismatch { .. }
            | Error::EmptyAggregation
            | Error::LayoutMismatch => 3,
        }
    }
}

pub(crate) fn check_dims(context: &'static str, left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            context,
            left,
            right,
        })
    }
}
