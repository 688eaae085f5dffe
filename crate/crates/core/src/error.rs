use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("invalid input: {0}")]
    Validation(String),

    #[error("shape mismatch: {left:?} vs {right:?} ({context})")]
    Shape {
        left: (usize, usize),
        right: (usize, usize),
        context: &'static str,
    },

    #[error("oracle enumeration exceeded its budget of {budget} steps")]
    OracleOverflow { budget: u64 },

    #[error("training diverged at step {step} (learning rate {learning_rate}): loss is {loss}")]
    NonFiniteLoss {
        step: u64,
        learning_rate: f64,
        loss: f64,
    },

    #[error("checksum mismatch in {0}")]
    Checksum(String),

    #[error("unsupported format in {path}: {message}")]
    Format { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }
}
