use thiserror::Error;

/// Errors produced by the numerical modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// An input lies outside the range where a formula is defined.
    #[error("range error: {0}")]
    Range(String),
    /// A structurally invalid domain, map, or field.
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("quadrature spec required to measure {0}")]
    MissingQuadrature(&'static str),
    #[error("no analytic {what} for {kind}")]
    Unsupported { what: &'static str, kind: &'static str },
    #[error("point {point:?} is outside the domain")]
    OutsideDomain { point: Vec<f64> },
    #[error("singular point {point:?}")]
    Singular { point: Vec<f64> },
    #[error("non-finite integrand value at {point:?}")]
    NonFinite { point: Vec<f64> },
    #[error("degenerate: {0}")]
    Degenerate(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn range<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Range(msg.into()))
}
