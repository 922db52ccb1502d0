use thiserror::Error;

/// Errors raised by preprocessing, sampling and model fitting.
#[derive(Debug, Error)]
pub enum Error {
    #[error("empty table")]
    EmptyTable,
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("outcome column `{0}` is not numeric")]
    NonNumericOutcome(String),
    #[error("zero-variance outcome")]
    ZeroVarianceOutcome,
    #[error("zero-range outcome")]
    ZeroRangeOutcome,
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
    #[error("unseen level `{level}` for categorical column `{column}`")]
    UnseenLevel { column: String, level: String },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid hyperparameter: {0}")]
    InvalidHypers(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("non-binary outcome: {0}")]
    NonBinaryOutcome(String),
    #[error("linear covariate is zero at row {0}")]
    ZeroCovariate(usize),
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("trees were not cached for this fit")]
    TreesNotCached,
    #[error("archive error: {0}")]
    Archive(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
