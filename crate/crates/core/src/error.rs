use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("design is rank deficient (condition estimate {cond:.3e})")]
    RankDeficient { cond: f64 },
    #[error("cannot normalize a zero vector")]
    ZeroVector,
    #[error("local-time estimate is zero; the index never visits the basis support")]
    ZeroLocalTime,
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("row {row}, column {column}: {message}")]
    BadValue {
        row: usize,
        column: String,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
