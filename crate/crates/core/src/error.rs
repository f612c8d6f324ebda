//! Error types shared across the toolkit.

use thiserror::Error;

/// Failures raised while evaluating metrics, jets or derived quantities.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum EvalError {
    /// Caller passed an argument outside the documented range.
    #[error("invalid argument: {0}")]
    Argument(String),
    /// An elementary function was evaluated outside its domain.
    #[error("domain violation: {0}")]
    Domain(String),
    /// Chart point lies outside the chart's declared domain.
    #[error("point {point:?} outside the domain of chart '{chart}'")]
    OutsideChart { chart: String, point: [f64; 4] },
    /// A metric stopped being positive definite.
    #[error("metric not positive definite at {point:?}: {detail}")]
    Validity { point: [f64; 4], detail: String },
    /// Unknown catalog entry.
    #[error("unknown metric '{0}'")]
    UnknownMetric(String),
    /// Expression parsing failed; `offset` is a byte offset into the input.
    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },
    /// A numerical routine could not reach a conclusive answer.
    #[error("numerically inconclusive: {0}")]
    Inconclusive(String),
    /// Generic numerical failure (quadrature, transport, linear algebra).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T, E = EvalError> = std::result::Result<T, E>;
