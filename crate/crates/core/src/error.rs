use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DpmeError {
    /// A parameter lies outside its mathematical domain.
    #[error("parameter out of domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    /// Malformed input data; `row` and `column` are 1-based when known.
    #[error("data error at row {row}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Data {
        row: usize,
        column: Option<usize>,
        message: String,
    },

    #[error("point is not on the probability simplex: {0}")]
    Infeasible(String),

    #[error("internal invariant violated: {0}")]
    Invariant(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl DpmeError {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        DpmeError::Domain(msg.into())
    }
}

impl From<std::io::Error> for DpmeError {
    fn from(err: std::io::Error) -> Self {
        DpmeError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, DpmeError>;
