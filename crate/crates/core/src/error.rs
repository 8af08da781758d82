use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    ContractViolation(String),

    /// A sentence that is not a rendered template reached the tokenizer.
    #[error("sentence is not a known template: {0:?}")]
    UnknownSentence(String),

    #[error("empty evaluation set")]
    EmptyEvaluationSet,

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("non-finite value at step {step}: {detail}")]
    Numeric { step: usize, detail: String },

    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch { expected: String, found: String },

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
