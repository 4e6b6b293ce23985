use thiserror::Error;

use crate::descent::DescentTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite coefficient value {value} at ({x}, {y})")]
    NonFiniteCoefficient { value: f64, x: f64, y: f64 },

    #[error("ellipticity violated: coefficient {value} at ({x}, {y})")]
    Ellipticity { value: f64, x: f64, y: f64 },

    #[error("matrix is not positive definite (pivot {pivot} = {value})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("time-step operator is not positive definite; coefficient range [{min}, {max}]")]
    StepOperator { min: f64, max: f64 },

    #[error("linear solve inaccurate: relative residual {residual:e}")]
    SolveResidual { residual: f64 },

    #[error("sample {index} at y = {y:?}: {source}")]
    Sample {
        index: usize,
        y: Vec<f64>,
        #[source]
        source: Box<Error>,
    },

    #[error("line search failed: step {eta:e} fell below the minimum after {} iterations", trace.records.len())]
    LineSearch { eta: f64, trace: Box<DescentTrace> },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("cache mismatch: {0}")]
    CacheMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
