//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by table ingestion, model fitting, estimation and
/// attribution.
#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {reason}")]
    MalformedRow { row: usize, reason: String },

    #[error("row {row}, column {column}: treatment value {value:?} is not 0 or 1")]
    InvalidTreatmentBit {
        row: usize,
        column: String,
        value: String,
    },

    #[error("table contains no data rows")]
    EmptyTable,

    #[error("invalid header: {0}")]
    InvalidHeader(String),

    #[error("{count} experiments exceed the exact-enumeration limit of {limit}")]
    TooManyExperiments { count: usize, limit: usize },

    #[error("experiment index {index} out of range for {count} experiments")]
    IndexOutOfRange { index: usize, count: usize },

    #[error("cannot fit propensity model: {0}")]
    SingleClassOnly(String),

    #[error("model requires at least one covariate; use the empirical propensity instead")]
    NoCovariates,

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("coalition {0} has no observations")]
    UnobservedCoalition(String),

    #[error("cannot combine estimates from methods {0} and {1}")]
    MethodMismatch(String, String),

    #[error("baseline mean {0} is too close to zero to express a lift")]
    BaselineNearZero(f64),

    #[error("design matrix is rank deficient; use a positive ridge penalty")]
    RankDeficient,

    #[error("no estimate available for sub-coalition {0}")]
    MissingSubsetValue(String),

    #[error("value oracle undefined for coalition {0}")]
    OracleUndefined(String),

    #[error("{failed} of {total} bootstrap resamples failed; first failure: {first}")]
    PipelineFailure {
        failed: usize,
        total: usize,
        first: String,
    },

    #[error("estimator {estimator} requires a fitted {model} model")]
    ModelRequired {
        estimator: &'static str,
        model: &'static str,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
