use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("closed loop is not stable (spectral radius {radius:.12})")]
    Unstable { radius: f64 },

    #[error("{method} did not converge after {iterations} iterations (last update {residual:e})")]
    NonConvergent {
        method: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("optimizer step left the stabilizing set after {retries} step halvings (iteration {iteration})")]
    StabilityLost { iteration: usize, retries: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite loss at update {update}: {detail}")]
    NonFiniteLoss { update: usize, detail: String },

    #[error("episode already finished")]
    EpisodeFinished,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
