use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MatchError {
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("more rows than columns ({rows} > {cols}); every row needs a distinct column")]
    TooManyRows { rows: usize, cols: usize },

    #[error("matrix must have at least one row and one column")]
    Empty,

    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("brute-force enumeration of {count} maps exceeds the limit of {limit}")]
    EnumerationTooLarge { count: u128, limit: u128 },

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("epsilon must lie in (0, 1), got {0}")]
    InvalidEpsilon(f64),

    #[error("lambda must lie in (0, 1], got {0}")]
    InvalidLambda(f64),

    #[error("zero-norm feature vector")]
    ZeroNorm,

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

impl MatchError {
    /// True for errors caused by an inadmissible matrix shape rather than
    /// malformed input.
    pub fn is_shape_error(&self) -> bool {
        matches!(
            self,
            MatchError::ShapeMismatch { .. } | MatchError::TooManyRows { .. } | MatchError::Empty
        )
    }
}

pub type Result<T> = std::result::Result<T, MatchError>;
