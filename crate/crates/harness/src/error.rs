use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parse error at line {line}: {message}")]
    Parse { path: String, line: u64, message: String },

    #[error(transparent)]
    Core(#[from] gradbound::Error),

    #[error("verification failed: {0}")]
    Verify(String),
}

impl HarnessError {
    pub fn config(msg: impl Into<String>) -> Self {
        HarnessError::Config(msg.into())
    }

    pub fn io(context: impl AsRef<Path>, source: std::io::Error) -> Self {
        HarnessError::Io {
            context: context.as_ref().display().to_string(),
            source,
        }
    }

    /// 1 for bad configuration or input, 2 for numerical and constraint
    /// failures, 3 for failed verification.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Core(e) if e.is_numerical() => 2,
            HarnessError::Verify(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
