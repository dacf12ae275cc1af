use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("resolution error: {0}")]
    Resolution(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("assembly error in part {part}: {msg}")]
    Assembly { part: &'static str, msg: String },

    #[error("characteristic integration failed: {0}")]
    Integration(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("format error: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, CoreError>;
