use thiserror::Error;

/// Errors raised by the domain model, scorers and the inner loop.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CoreError {
    #[error("invalid payload: {0}")]
    InvalidPayload(String),

    #[error("invalid objective `{id}`: {reason}")]
    InvalidObjective { id: String, reason: String },

    #[error("unscored objective `{0}`")]
    UnscoredObjective(String),

    #[error("normalizer contract violated for objective `{id}` (normalized value {value})")]
    NormalizerContract { id: String, value: f64 },

    #[error("missing normalizer for objective `{0}`")]
    MissingNormalizer(String),

    #[error("empty population")]
    EmptyPopulation,

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("sequence shorter than k (len {len}, k {k})")]
    SequenceShorterThanK { len: usize, k: usize },

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("attribute not present: `{0}`")]
    AttributeNotPresent(String),

    #[error("unknown scoring function `{0}`")]
    UnknownDescriptor(String),

    #[error("parameter `{name}`: {reason}")]
    Param { name: String, reason: String },

    #[error("io error on `{path}`: {message}")]
    Io { path: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("proposer failed: {0}")]
    Proposer(String),
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;

impl CoreError {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, err: std::io::Error) -> Self {
        CoreError::Io {
            path: path.as_ref().display().to_string(),
            message: err.to_string(),
        }
    }
}
