use alloc::string::String;
use alloc::vec::Vec;

/// Errors raised by the core algorithms.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid metric: {0}")]
    InvalidMetric(String),

    #[error("{name} = {value} is out of range: {constraint}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        constraint: &'static str,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("coefficient sequence must have length d + 1, be non-increasing and end in 0")]
    InvalidCoefficients,

    #[error("hypothesis violated: {0}")]
    Hypothesis(String),

    #[error(
        "eta * alpha = {product} exceeds 1/2 with c2 = {c2}; use c2 >= {suggested_c2}"
    )]
    StepRegularizerProduct {
        product: f64,
        c2: f64,
        suggested_c2: f64,
    },

    #[error("gradient trace was not enabled for this run")]
    TraceDisabled,

    #[error("non-positive values at ranks {0:?}")]
    NonPositiveValues(Vec<usize>),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, actual })
    }
}
