use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("integration blew up at t = {time:.4} s")]
    IntegrationBlowup { time: f64 },

    #[error("infeasible dispatch: {0}")]
    InfeasibleDispatch(String),

    #[error("training diverged in {stage} at epoch {epoch}, step {step}: loss = {loss}")]
    Divergence { stage: String, epoch: usize, step: usize, loss: f64 },

    #[error("rollout diverged on every channel; last valid step {last_valid_step:?}")]
    RolloutDiverged { last_valid_step: Option<usize> },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("corrupt file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit status for command-line use: 1 for usage, configuration
    /// and shape problems, 2 for numerical divergence, 3 for I/O and
    /// corrupt files.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Shape(_)
            | Error::Config(_)
            | Error::InfeasibleDispatch(_)
            | Error::Validation(_)
            | Error::Json(_) => 1,
            Error::NonFinite(_)
            | Error::IntegrationBlowup { .. }
            | Error::Divergence { .. }
            | Error::RolloutDiverged { .. } => 2,
            Error::Corrupt { .. } | Error::Io { .. } => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn corrupt(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Corrupt { path: path.into(), reason: reason.into() }
    }
}
