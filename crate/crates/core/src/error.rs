use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("search too large: C({period},{kept}) = {count} patterns exceeds the enumeration cap of {cap}")]
    SearchTooLarge {
        period: usize,
        kept: usize,
        count: u128,
        cap: u64,
    },

    #[error("degenerate pattern: {0}")]
    Degenerate(String),

    #[error("no valid hypothesis in the search surface")]
    NoValidCell,

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
