use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("map `{map}`: {msg}")]
    Map { map: String, msg: String },
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("tape: {0}")]
    Tape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("channel closed: {0}")]
    ChannelClosed(String),
    #[error("all-reduce: {0}")]
    AllReduce(String),
    #[error("line {line}: {msg}")]
    LogParse { line: usize, msg: String },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
