use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("model has no calibrated threshold")]
    Uncalibrated,

    #[error("input is empty")]
    EmptyInput,

    #[error("kernel bandwidth must be positive, got {0}")]
    NonpositiveScale(f64),

    #[error("interval window is empty for n={n}: floor(n*k1)={lower}, floor(n*k2)={upper}")]
    DegenerateInterval { n: usize, lower: usize, upper: usize },

    #[error("constraint subset is empty")]
    NoConstraintSubset,

    #[error("no samples on the penalized side of the objective")]
    EmptyObjective,

    #[error("minibatch contains no constraint-subset samples")]
    ConstraintBatchEmpty,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("label must be -1 or +1, got {0}")]
    InvalidLabel(i64),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("ragged rows: line {line} has {found} columns, expected {expected}")]
    RaggedRows {
        line: usize,
        expected: usize,
        found: usize,
    },

    #[error("unknown label {value:?} at line {line}")]
    UnknownLabel { line: usize, value: String },

    #[error("feature index {index} at line {line} is not strictly increasing")]
    NonMonotonicIndex { line: usize, index: usize },

    #[error("split leaves an empty side: train={train}, test={test}")]
    DegenerateSplit { train: usize, test: usize },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("batch size {batch} exceeds population size {population}")]
    BatchTooLarge { batch: usize, population: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Short machine-readable category, used in CLI error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Json(_) | Error::InvalidParameter(_) => "config",
            Error::Parse { .. }
            | Error::RaggedRows { .. }
            | Error::UnknownLabel { .. }
            | Error::NonMonotonicIndex { .. }
            | Error::NonFinite(_)
            | Error::InvalidLabel(_)
            | Error::Csv(_) => "data",
            Error::Dimension { .. } => "dimension",
            Error::Uncalibrated => "uncalibrated",
            _ => "numeric",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
