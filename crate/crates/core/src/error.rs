use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("design matrix is rank deficient: numerical rank {rank} < {cols} columns")]
    RankDeficient { rank: usize, cols: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite objective {value} at iterate {iterate:?}")]
    NonFinite { value: f64, iterate: Vec<f64> },

    #[error("Lipschitz validation failed: {0}")]
    Lipschitz(String),

    #[error("net construction diagnostic: {0}")]
    NetDiagnostic(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn parse(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse { context: context.into(), message: message.into() }
    }

    /// Process exit code used by the command-line harness: 2 for validation
    /// problems, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::RankDeficient { .. } | Error::NonFinite { .. } | Error::NetDiagnostic(_) => 3,
            Error::InvalidParameter(_)
            | Error::DimensionMismatch(_)
            | Error::Lipschitz(_)
            | Error::Parse { .. }
            | Error::Io { .. } => 2,
        }
    }
}
