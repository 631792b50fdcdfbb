use thiserror::Error;

pub type Result<T> = std::result::Result<T, EbnmError>;

#[derive(Debug, Error)]
pub enum EbnmError {
    #[error("length mismatch: x has {x_len} entries but s has {s_len}")]
    LengthMismatch { x_len: usize, s_len: usize },

    #[error("empty observation vector")]
    Empty,

    #[error("non-finite observation at index {index}")]
    NonFiniteObservation { index: usize },

    #[error("nonpositive standard error at index {index}")]
    NonPositiveStandardError { index: usize },

    #[error("invalid prior specification: {0}")]
    InvalidSpec(String),

    #[error("invalid prior: {0}")]
    InvalidPrior(String),

    #[error("observation {index} unsupported by grid")]
    UnsupportedByGrid { index: usize },

    #[error("optimizer did not converge: {message} (best objective {objective})")]
    OptimizerFailed {
        message: String,
        best: Vec<f64>,
        objective: f64,
    },

    #[error("mixture weight solver stopped after {iterations} iterations with dual residual {residual:e}")]
    WeightSolverFailed {
        weights: Vec<f64>,
        residual: f64,
        iterations: usize,
    },

    #[error("unknown scenario '{0}'")]
    UnknownScenario(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}
