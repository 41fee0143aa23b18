use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimension: {0}")]
    InvalidDimension(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: String, got: String },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("matrix is not unitary: ||A^H A - I||_F = {deviation:.3e}")]
    NotUnitary { deviation: f64 },

    #[error("non-finite entry at row {row}, col {col}")]
    NonFinite { row: usize, col: usize },

    #[error("singular input: smallest singular value {smallest:.3e} vs largest {largest:.3e}")]
    SingularInput { smallest: f64, largest: f64 },

    #[error("degenerate (rank-deficient) gradient at iteration {iteration}")]
    DegenerateGradient { iteration: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("evaluator mode does not match model: {0}")]
    ModeMismatch(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn mismatch(expected: impl ToString, got: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }
}
