use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A trajectory left the divergence radius. Only non-contractive or
    /// corrupted codes can do this.
    #[error("trajectory diverged at step {step} (|x| = {magnitude:e})")]
    Divergence { step: usize, magnitude: f64 },

    #[error("not ready: {0}")]
    NotReady(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("format error: {0}")]
    Format(String),

    /// An internal numeric invariant broke (e.g. an inverted sampling
    /// interval beyond rounding slop).
    #[error("numeric invariant violated: {0}")]
    Numeric(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Stream(#[from] std::io::Error),

    #[error("manifest: {0}")]
    Manifest(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
