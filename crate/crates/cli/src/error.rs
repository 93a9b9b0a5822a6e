use std::fmt;

use comet::CometError;

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { code: EXIT_DATA, message: message.into() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<CometError> for CliError {
    fn from(e: CometError) -> Self {
        let code = match &e {
            CometError::Validation { .. } | CometError::Checkpoint(_) => EXIT_CONFIG,
            CometError::NonFinite(_) | CometError::Diverged { .. } => EXIT_NUMERIC,
            CometError::Dimension { .. }
            | CometError::BatchSize(_)
            | CometError::Index { .. }
            | CometError::Parse { .. }
            | CometError::Sampling(_)
            | CometError::Io { .. } => EXIT_DATA,
        };
        CliError { code, message: e.to_string() }
    }
}

pub type CliResult<T> = Result<T, CliError>;
