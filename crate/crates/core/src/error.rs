use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, SilvarError>;

#[derive(Debug, Error)]
pub enum SilvarError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A cell or field that failed to parse. `row` and `col` are 1-based file coordinates.
    #[error("{path}: parse error at ({row},{col}): {msg}")]
    Parse {
        path: PathBuf,
        row: usize,
        col: usize,
        msg: String,
    },

    /// A serialized model or config that parsed but violates an invariant.
    #[error("schema violation: {0}")]
    Schema(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl SilvarError {
    pub fn invalid(msg: impl Into<String>) -> Self {
        SilvarError::InvalidInput(msg.into())
    }
}
