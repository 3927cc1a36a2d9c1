use thiserror::Error;

/// Errors raised by the numerical routines and file loaders.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is not square ({rows}x{cols})")]
    NonSquare { rows: usize, cols: usize },

    #[error("determinant {det} is not within tolerance of 1")]
    BadDeterminant { det: f64 },

    #[error("measure has no atoms")]
    EmptySupport,

    #[error("atom weight {weight} is not positive and finite")]
    NegativeWeight { weight: f64 },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {0} is outside the supported range 2..=8")]
    UnsupportedDimension(usize),

    #[error("matrix has non-finite entries")]
    NonFinite,

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("singular value decomposition failed")]
    SvdFailure,

    #[error("basis vectors are linearly dependent")]
    DependentBasis,

    #[error("basis vector is not zero-sum (sum = {0})")]
    NotTraceless(f64),

    #[error("quotient E = a/a' is trivial")]
    DegenerateQuotient,

    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("no contraction: certificate {certificate:e} exceeds 0.1")]
    NoContraction { certificate: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(format!("line {}, column {}: {}", e.line(), e.column(), e))
    }
}
