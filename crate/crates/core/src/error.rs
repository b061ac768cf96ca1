use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse {
        /// 1-based data row (the header is row 0).
        row: usize,
        column: String,
        message: String,
    },

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("stale model: {0}")]
    StaleModel(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("empty selection")]
    EmptySelection,

    #[error("unknown grouping `{0}`")]
    UnknownGrouping(String),

    #[error("a fit is already running for this session")]
    FitInProgress,

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
