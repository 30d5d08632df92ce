use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum VeilError {
    #[error("dimension mismatch in {op}: expected {expected}, found {found}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{component} loss failed: {source}")]
    Component {
        component: &'static str,
        #[source]
        source: Box<VeilError>,
    },

    #[error("training aborted at epoch {epoch}, batch {batch}: {reason}")]
    TrainingAborted {
        epoch: usize,
        batch: usize,
        reason: String,
    },

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Config(Vec<String>),

    #[error("format error: {0}")]
    Format(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("remote error {reason}: {message}")]
    Remote { reason: u16, message: String },

    #[error("csv error at row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, VeilError>;

pub(crate) fn dim_err(op: &'static str, expected: impl ToString, found: impl ToString) -> VeilError {
    VeilError::DimensionMismatch {
        op,
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
