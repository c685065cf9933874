use thiserror::Error;

/// Errors raised by the samplers, models and experiment harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("evaluation error: {0}")]
    Evaluation(String),

    /// Every particle weight vanished; `step` is the sampler step at which it happened.
    #[error("weight degeneracy at step {step}: all particle weights vanished")]
    Degeneracy { step: usize },

    #[error("non-finite value for particle {particle} at step {step}")]
    Propagation { particle: usize, step: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("estimation error: {0}")]
    Estimation(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
