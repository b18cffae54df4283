use thiserror::Error;

/// Crate-wide error type. Variants mirror the failure modes of the pipeline
/// stages so callers (and the CLI) can report precise diagnostics.
#[derive(Debug, Error)]
pub enum Error {
    /// A required column is missing or a column set does not match.
    #[error("schema error: {0}")]
    Schema(String),

    /// No usable input (empty file, zero records, empty sequence).
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A column contains no valid values, so gaps cannot be filled.
    #[error("column '{0}' has no valid values; cannot fill gaps")]
    UnfillableColumn(String),

    /// A row or fit interval is empty or out of bounds.
    #[error("invalid range: {0}")]
    InvalidRange(String),

    /// An argument violates a documented precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Tensor dimensions are inconsistent with the operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// A dataset has no windows where at least one is required.
    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    /// A loss or gradient went NaN/Inf outside a training loop.
    #[error("non-finite value: {0}")]
    NonFinite(String),

    /// A loss went NaN/Inf during training; carries loop diagnostics.
    #[error("non-finite loss {value} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss {
        epoch: usize,
        batch: usize,
        value: f64,
    },

    /// A parameter file is malformed (bad magic, version, truncation, shape).
    #[error("model file error: {0}")]
    ModelFormat(String),

    /// A windowed-dataset file is malformed (bad magic, version, truncation).
    #[error("dataset file error: {0}")]
    DatasetFormat(String),

    /// Loaded parameters do not match the expected architecture.
    #[error("config mismatch: {0}")]
    ConfigMismatch(String),

    /// Ensemble members disagree on target timestamps.
    #[error("alignment error: {0}")]
    Alignment(String),

    /// Ensemble weights are invalid (negative, wrong sum, no members).
    #[error("ensemble spec error: {0}")]
    EnsembleSpec(String),

    /// A metric is undefined for the given inputs (e.g. all actuals ~ 0).
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    /// Paired vectors have different lengths.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// Invalid model or training configuration.
    #[error("config error: {0}")]
    Config(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
