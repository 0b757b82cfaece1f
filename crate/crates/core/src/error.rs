//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error on {path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("parse error at row {row}, column {column}: {detail}")]
    Parse {
        row: usize,
        column: usize,
        detail: String,
    },

    #[error("series '{id}' is too short: {len} points, minimum {required}")]
    SeriesTooShort {
        id: String,
        len: usize,
        required: usize,
    },

    #[error("series '{id}' has a gap at row {row}, column {column}")]
    SeriesGap {
        id: String,
        row: usize,
        column: usize,
    },

    #[error("duplicate series id '{id}'")]
    DuplicateSeriesId { id: String },

    #[error("invalid split: {detail}")]
    InvalidSplit { detail: String },

    #[error("unsupported forecast horizon {horizon} (supported: 1, 3, 6, 12)")]
    UnsupportedHorizon { horizon: usize },

    #[error("window construction over {range_len} points with w={input_size}, h={horizon} yields no instances")]
    EmptyWindowSet {
        range_len: usize,
        input_size: usize,
        horizon: usize,
    },

    #[error("degenerate scaler: training values are constant ({value})")]
    DegenerateScaler { value: f64 },

    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: String, detail: String },

    #[error("non-finite value produced by primitive '{primitive}'")]
    NonFinite { primitive: String },

    #[error("loss target at index {index} is within {threshold} of zero")]
    NearZeroTarget { index: usize, threshold: f64 },

    #[error("computation tape already consumed by a backward pass")]
    TapeConsumed,

    #[error("gradient supplied for frozen parameter '{name}'")]
    FrozenParameterGradient { name: String },

    #[error("unknown parameter '{name}'")]
    UnknownParameter { name: String },

    #[error("invalid configuration: {detail}")]
    InvalidConfig { detail: String },

    #[error("training diverged at epoch {epoch}: validation loss is not finite")]
    Divergence { epoch: usize },

    #[error("validation set is empty")]
    EmptyValidation,

    #[error("{what} requires at least {required} points, got {actual}")]
    TooShort {
        what: String,
        required: usize,
        actual: usize,
    },

    #[error("history of length {history_len} does not contiguously extend the fitted series of length {fitted_len}")]
    NonContiguousHistory {
        fitted_len: usize,
        history_len: usize,
    },

    #[error("{what} is undefined for a constant series")]
    ConstantSeries { what: String },

    #[error("zero variance in {what}")]
    ZeroVariance { what: String },

    #[error("singular regression in {what}")]
    SingularRegression { what: String },

    #[error("cluster count k={k} out of range for n={n}")]
    ClusterCountOutOfRange { k: usize, n: usize },

    #[error("ranking matrix has a missing cell: series '{series}', model '{model}'")]
    MissingCell { series: String, model: String },

    #[error("incomplete input-size candidates for series '{series}', model '{model}', h={horizon}: missing w={missing:?}")]
    IncompleteCandidates {
        series: String,
        model: String,
        horizon: usize,
        missing: Vec<usize>,
    },

    #[error("no {what} available: {detail}")]
    Empty { what: String, detail: String },

    #[error("feature '{feature}' failed for series '{series}': {reason}")]
    FeatureFailed {
        series: String,
        feature: String,
        reason: String,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn invalid_config(detail: impl Into<String>) -> Self {
        Error::InvalidConfig {
            detail: detail.into(),
        }
    }

    pub fn shape(op: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            op: op.into(),
            detail: detail.into(),
        }
    }
}
