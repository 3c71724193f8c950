use thiserror::Error;

pub type Result<T, E = RulError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum RulError {
    /// Malformed text input; `line` is 1-based.
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    /// Shapes, counts or orderings that do not fit together.
    #[error("structural error: {0}")]
    Structure(String),

    #[error("invalid value: {0}")]
    Value(String),

    #[error("solver failure: {0}")]
    Solver(String),

    /// Non-finite values produced during a numeric computation.
    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("model type error: {0}")]
    ModelType(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl RulError {
    pub(crate) fn structure(msg: impl Into<String>) -> Self {
        RulError::Structure(msg.into())
    }

    pub(crate) fn value(msg: impl Into<String>) -> Self {
        RulError::Value(msg.into())
    }
}
