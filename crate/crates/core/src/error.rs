use thiserror::Error;

#[derive(Debug, Error)]
pub enum OtsmError {
    #[error("invalid length {len}: {reason}")]
    InvalidLength { len: usize, reason: &'static str },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("config `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("channel profile: {0}")]
    Profile(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("size guard exceeded: {0}")]
    Size(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl OtsmError {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        OtsmError::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, OtsmError>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(OtsmError::Dimension { expected, got })
    }
}
