//! Crate-wide error type.

use thiserror::Error;

use crate::quad::QuadError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("not in A2: a1 = {a1}, a2 = {a2} (both must be positive)")]
    NotStable { a1: f64, a2: f64 },
    #[error("variance undefined: {0}")]
    VarianceUndefined(String),
    #[error("existence condition failed: {0}")]
    ConditionFailed(String),
    #[error("jump measure is not sampleable: {0}")]
    NotSampleable(String),
    #[error("no closed asymptotic for this family: {0}")]
    NoClosedAsymptotic(String),
    #[error("lag {tau} is not a multiple of dt = {dt}")]
    OffGrid { tau: f64, dt: f64 },
    #[error("degenerate variance")]
    DegenerateVariance,
    #[error("{context}: {source}")]
    Quadrature {
        context: String,
        #[source]
        source: QuadError,
    },
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn quad(context: impl Into<String>, source: QuadError) -> Self {
        Error::Quadrature {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
