use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("unsupported NIfTI datatype code {0}")]
    UnsupportedDatatype(i16),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("index out of range: {0}")]
    OutOfRange(String),

    #[error("rank oracle refuses {cells} cells (cap is {cap})")]
    OracleTooLarge { cells: usize, cap: usize },

    #[error("class {0} has no samples")]
    MissingClass(String),

    #[error("training labels contain a single class")]
    DegenerateLabels,

    #[error("shape mismatch: expected {expected} features, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("threshold {tau} exceeds the largest importance {max}")]
    EmptySelection { tau: f64, max: f64 },

    #[error("covariance is degenerate (zero variance)")]
    DegenerateCovariance,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("AUC is undefined when only one class is present")]
    UndefinedAuc,

    #[error("model container: {0}")]
    Model(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("invariant violated: {0}")]
    Invariant(String),
}

impl Error {
    pub(crate) fn in_file(self, path: impl Into<PathBuf>) -> Error {
        Error::File {
            path: path.into(),
            source: Box::new(self),
        }
    }
}
