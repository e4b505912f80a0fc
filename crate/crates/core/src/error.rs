use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("value out of range: {0}")]
    OutOfRange(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("episode already terminated; reset the environment first")]
    EpisodeDone,
    #[error("replay buffer holds {available} transitions, {required} required")]
    InsufficientBuffer { available: usize, required: usize },
    #[error("trajectory step {0} has no Dirichlet draw")]
    MissingDirichlet(usize),
    #[error("environment does not support snapshot/restore")]
    NoSnapshot,
    #[error("conjugate gradient failed: {0}")]
    ConjugateGradient(String),
    #[error("training diverged at episode {episode}: {what}")]
    Diverged { episode: usize, what: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Shape {
            context,
            expected,
            actual,
        })
    }
}
