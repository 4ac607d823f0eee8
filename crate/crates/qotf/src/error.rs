use thiserror::Error;

#[derive(Debug, Error)]
pub enum QotfError {
    #[error(transparent)]
    Qsim(#[from] qsim::QsimError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("serialization error: {0}")]
    Serde(String),
    #[error("protocol abort at {site}: {reason}")]
    Abort { site: String, reason: String },
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("handshake failed: {0}")]
    Handshake(String),
    #[error("frame of {0} bytes exceeds the 16 MiB cap")]
    FrameTooLarge(usize),
    #[error("operation not available: {0}")]
    Capability(String),
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("structural error: {0}")]
    Structural(String),
    #[error("channel closed")]
    ChannelClosed,
}

impl QotfError {
    pub fn abort(site: &str, reason: impl Into<String>) -> Self {
        QotfError::Abort {
            site: site.to_string(),
            reason: reason.into(),
        }
    }

    pub fn is_abort(&self) -> bool {
        matches!(self, QotfError::Abort { .. })
    }
}

impl From<serde_json::Error> for QotfError {
    fn from(e: serde_json::Error) -> Self {
        QotfError::Serde(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, QotfError>;
