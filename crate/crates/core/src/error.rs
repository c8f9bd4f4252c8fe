use thiserror::Error;

/// Crate-wide error type; variants map 1:1 onto the failure classes the
/// operations can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid topology: {0}")]
    InvalidTopology(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// Neighbor list overflow is a hard error, never silent truncation.
    #[error("neighbor capacity exceeded for atom {atom}: {count} neighbors of type {neighbor_type} but sel = {sel}")]
    CapacityExceeded {
        atom: usize,
        neighbor_type: usize,
        count: usize,
        sel: usize,
    },

    #[error("model error: {0}")]
    Model(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("communication plan error: {0}")]
    Plan(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn model(msg: impl Into<String>) -> Self {
        Error::Model(msg.into())
    }
}
