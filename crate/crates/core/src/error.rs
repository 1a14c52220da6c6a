use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("symmetric eigensolver did not converge for a {dim}x{dim} matrix")]
    NumericalFailure { dim: usize },

    #[error("matrix entries must be finite")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not positive definite (smallest eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("eigenvalue {value:e} is at or below the log floor {floor:e}")]
    EigenvalueBelowFloor { value: f64, floor: f64 },

    #[error("exponent argument {value} exceeds the overflow cap {cap}")]
    Overflow { value: f64, cap: f64 },

    #[error("tangent vectors are attached to different base points")]
    BasePointMismatch,

    #[error("gram matrix under {kernel} failed PSD certification: min eigenvalue {min_eig:e}, max |eigenvalue| {max_abs:e}")]
    PsdCertification {
        kernel: String,
        min_eig: f64,
        max_abs: f64,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: cannot decode image: {msg}")]
    Decode { path: PathBuf, msg: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}
