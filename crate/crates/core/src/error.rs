use thiserror::Error;

pub type Result<T, E = CometError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CometError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("batch statistics need at least 2 rows in train mode, got {0}")]
    BatchSize(usize),

    #[error("index {index} out of range for {context} of length {len}")]
    Index {
        context: &'static str,
        index: usize,
        len: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("invalid {what}: {reason}")]
    Validation { what: &'static str, reason: String },

    #[error("parse error in {path} at line {line}: {reason}")]
    Parse {
        path: String,
        line: usize,
        reason: String,
    },

    #[error("episode sampling: {0}")]
    Sampling(String),

    #[error("training diverged at episode {episode} (seed {seed}): loss {loss}; recent losses {history:?}")]
    Diverged {
        episode: usize,
        seed: u64,
        loss: f64,
        history: Vec<f64>,
    },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CometError {
    pub(crate) fn validation(what: &'static str, reason: impl Into<String>) -> Self {
        CometError::Validation {
            what,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        CometError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub(crate) fn check_dim(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(CometError::Dimension {
            context,
            expected,
            actual,
        })
    }
}
