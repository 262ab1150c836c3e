use mec_core::EnvError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LearnError {
    #[error("invalid network spec: {0}")]
    Spec(String),
    #[error("{what} has length {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("replay memory is empty")]
    EmptyMemory,
    #[error("replay memory holds {have} transitions, {needed} needed")]
    InsufficientMemory { needed: usize, have: usize },
    #[error("invalid hyperparameters: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Env(#[from] EnvError),
}

impl LearnError {
    /// Errors that mean training produced unusable numbers.
    pub fn is_divergence(&self) -> bool {
        matches!(self, LearnError::NonFinite(_))
    }
}
