use thiserror::Error;

pub type Result<T> = std::result::Result<T, TdsError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TdsError {
    /// Grid or matrix dimensions outside what an operation accepts.
    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("shape mismatch: expected {expected:?}, got {found:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Non-finite or otherwise unusable input values.
    #[error("invalid data: {0}")]
    Data(String),

    #[error("index ({row}, {col}) out of range for second difference on {rows}x{cols} grid")]
    Index {
        row: usize,
        col: usize,
        rows: usize,
        cols: usize,
    },

    #[error("conjugate gradients did not converge after {iterations} iterations (relative residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("problem size {size} exceeds limit {limit}")]
    TooLarge { size: usize, limit: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for TdsError {
    fn from(e: std::io::Error) -> Self {
        TdsError::Io(e.to_string())
    }
}
