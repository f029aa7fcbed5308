use thiserror::Error;

/// Errors raised anywhere in the solver stack.
#[derive(Debug, Error)]
pub enum SaddleError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate rank: sigma_{rank} = {sigma:e} is below {tol:e}")]
    DegenerateRank { rank: usize, sigma: f64, tol: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line search failed after {backtracks} backtracks ({context})")]
    LineSearchFailure { backtracks: usize, context: &'static str },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("problem too large for dense diagnostics: N = {n} exceeds {limit}")]
    TooLarge { n: usize, limit: usize },

    #[error("parameter inconsistency: {0}")]
    ParameterInconsistency(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = SaddleError> = std::result::Result<T, E>;
