use std::fmt;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the library can report.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {left:?} vs {right:?}")]
    Dimension { left: Vec<usize>, right: Vec<usize> },

    #[error("index {index} out of range (limit {limit})")]
    Index { index: usize, limit: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("value {0} exceeds the binary16 range")]
    Overflow(f32),

    #[error("contract violated: {0}")]
    Contract(String),

    #[error("manifest validation failed: {0}")]
    Validation(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: usize, message: String },

    #[error("delta mode error: {0}")]
    Mode(String),

    #[error("base mismatch: delta expects base {expected:#010x}, got {found:#010x}")]
    BaseMismatch { expected: u32, found: u32 },

    #[error("missing artifacts: {}", .0.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", "))]
    Missing(Vec<std::path::PathBuf>),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(offset: usize, message: impl fmt::Display) -> Self {
        Error::Format {
            offset,
            message: message.to_string(),
        }
    }

    pub(crate) fn contract(message: impl fmt::Display) -> Self {
        Error::Contract(message.to_string())
    }

    pub(crate) fn parameter(message: impl fmt::Display) -> Self {
        Error::Parameter(message.to_string())
    }

    /// Corrupt or mismatched artifacts, as opposed to caller mistakes.
    pub fn is_integrity(&self) -> bool {
        matches!(self, Error::Format { .. } | Error::BaseMismatch { .. })
    }
}
