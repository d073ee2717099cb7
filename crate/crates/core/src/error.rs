use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate geometry: zero-length link")]
    ZeroDistance,

    #[error("invalid realization: {0}")]
    InvalidRealization(String),

    #[error("invalid AMC table: {0}")]
    AmcTable(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("exhaustive search refused for {0} CR links (limit is 4)")]
    OracleTooLarge(usize),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
