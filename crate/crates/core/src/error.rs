use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid partition: {0}")]
    InvalidPartition(String),

    #[error("dyadic grid needs T*2^n to be a positive integer, got T={t_end}, n={level} (T*2^n = {count})")]
    NonIntegralDyadic { t_end: f64, level: u32, count: f64 },

    #[error("partitions are not nested: time {time} of the coarser grid is not a point of the finer grid")]
    NotNested { time: f64 },

    #[error("partitions do not cover the same interval: [0, {left}] vs [0, {right}]")]
    IntervalMismatch { left: f64, right: f64 },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("covariance matrix is not positive definite even after jitter {jitter:e} (h={h}, N={n})")]
    NotPositiveDefinite { h: f64, n: usize, jitter: f64 },

    #[error("non-finite state at substep {substep} of {steps}")]
    NonFiniteState { substep: usize, steps: usize },

    #[error("Newton iteration did not converge after {iterations} iterations (last residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("singular sensitivity matrix (|det| / scale = {ratio:e}); rank(b) may be deficient or y1 unreachable")]
    SingularJacobian { ratio: f64 },

    #[error("singular sub-Jacobian in the solved coordinates (|det| / scale = {ratio:e}); try a different free/fixed coordinate split")]
    SingularSubJacobian { ratio: f64 },

    #[error("inversion failed on interval {index}: {source}")]
    Interval {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("nonpositive sensitivity determinant {value} on interval {index}")]
    NonPositiveDeterminant { index: usize, value: f64 },

    #[error("all {samples} Monte-Carlo samples failed inversion")]
    AllSamplesFailed { samples: usize },

    #[error("ill-conditioned scale fit: {0}")]
    IllConditioned(String),

    #[error("coordinate '{0}' has no sensitive likelihood component (infinite order, unestimable)")]
    Unestimable(String),

    #[error("posterior stage {stage} underflowed to zero mass; supply the prior in log space")]
    PosteriorUnderflow { stage: usize },

    #[error("unknown model id '{0}'")]
    UnknownModel(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn at_interval(self, index: usize) -> Error {
        Error::Interval {
            index,
            source: Box::new(self),
        }
    }

    /// Interval index carried by an inversion failure, if any.
    pub fn interval_index(&self) -> Option<usize> {
        match self {
            Error::Interval { index, .. } => Some(*index),
            Error::NonPositiveDeterminant { index, .. } => Some(*index),
            _ => None,
        }
    }
}
