use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("operator is not positive definite: curvature {curvature:e} at iteration {iteration} (non-coercive coefficient?)")]
    Indefinite { iteration: usize, curvature: f64 },

    #[error("solver breakdown at iteration {iteration}")]
    Breakdown { iteration: usize },

    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    #[error("two-defect budget exceeded: {required} supercell solves required, budget allows {budget}")]
    BudgetExceeded { required: usize, budget: usize },

    #[error("realization on stream {stream} (pattern {pattern_hash:016x}) failed: {source}")]
    Realization {
        stream: u64,
        pattern_hash: u64,
        #[source]
        source: Box<Error>,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
