use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("behavior probability is zero at state {state}, action {action} and clipping is disabled")]
    ZeroProbability { state: usize, action: usize },

    #[error("state {state} has no action with positive mass")]
    EmptySupport { state: usize },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("state {state} is never visited in the dataset (strict mode)")]
    UnvisitedState { state: usize },

    #[error("linear solve failed: {0}")]
    Solver(String),

    #[error("internal consistency check failed: {0}")]
    Inconsistent(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn shape(expected: impl ToString, got: impl ToString) -> Error {
    Error::ShapeMismatch {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
