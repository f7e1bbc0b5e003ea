use objevo_core::CoreError;
use thiserror::Error;

use crate::matcher::MatchResult;

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error("no plan for iteration {0}")]
    NoPlan(u32),

    #[error("completion request failed: {0}")]
    Completion(String),

    #[error("could not parse agent response: {message}")]
    Parse { message: String, raw: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("plan retries exhausted after {attempts} attempts; {} objectives unmatched", last.unmatched.len())]
    RetryExhausted { attempts: u32, last: MatchResult },

    #[error("gate `{0}` already resolved")]
    AlreadyResolved(String),

    #[error("gate `{0}` not found")]
    GateNotFound(String),

    #[error("run aborted")]
    Aborted,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error on `{path}`: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record in `{path}`: {message}")]
    Json { path: String, message: String },
}

pub type Result<T, E = AgentError> = std::result::Result<T, E>;

impl AgentError {
    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn json(path: impl AsRef<std::path::Path>, err: impl std::fmt::Display) -> Self {
        Self::Json {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
