use thiserror::Error;

/// Errors raised by the estimators, generators, and harnesses.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("cannot normalize a zero vector")]
    ZeroVector,

    #[error("input is empty")]
    EmptyInput,

    #[error("weight at index {index} is not strictly positive ({value})")]
    NonPositiveWeight { index: usize, value: f64 },

    #[error("vector is not unit norm (norm = {norm})")]
    NonUnitInput { norm: f64 },

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },

    #[error("X^T (Y - mean(Y)) is zero; the initial index direction is undefined")]
    DegenerateInitialization,

    #[error("rejection sampler stalled: acceptance rate {rate} over {attempts} draws")]
    RejectionStall { rate: f64, attempts: usize },

    #[error("design must have exactly two columns, found {0}")]
    NotTwoColumns(usize),

    #[error("slope needs at least two distinct sample sizes")]
    UnderdeterminedSlope,

    #[error("no estimates to summarize")]
    EmptyEstimateList,

    #[error("AUC is undefined when labels contain a single class")]
    SingleClassAuc,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::LengthMismatch { expected, actual })
    }
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
