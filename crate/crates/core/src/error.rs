use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid or inconsistent configuration, rejected before any solve.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected}, got {got}")]
    Shape { expected: String, got: String },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A value violates a type invariant (non-finite coordinate, bad weights, ...).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("oracle limit exceeded: exact assignment supports at most {limit} points in d >= 2, got {n}")]
    OracleLimit { n: usize, limit: usize },

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// The inner ascent produced a non-finite objective. Carries the
    /// proximal objective values seen so far.
    #[error("inner ascent diverged after {iterations} iterations")]
    Diverged {
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("no data rows")]
    Empty,

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn shape_err(expected: impl ToString, got: impl ToString) -> Error {
    Error::Shape {
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
