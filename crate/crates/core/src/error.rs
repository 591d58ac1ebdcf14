use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("structural integrity violated: {0}")]
    Integrity(String),
    #[error("index out of range: {0}")]
    Index(String),
    #[error("32-bit accumulator overflow in {0}")]
    Overflow(&'static str),
    #[error("value outside domain: {0}")]
    Domain(String),
    #[error("precondition failed: {0}")]
    Precondition(String),
    #[error("value outside INT8 range: {0}")]
    Range(String),
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    #[error("calibration failed: {0}")]
    Calibration(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("bad matrix file: {0}")]
    Format(String),
    #[error("missing upstream artifact from stage `{stage}`: {}", path.display())]
    MissingStage { stage: &'static str, path: PathBuf },
    #[error("stale artifact {}: inputs changed since it was written; rerun stage `{stage}`", path.display())]
    Stale { stage: &'static str, path: PathBuf },
    #[error("config error: {0}")]
    Config(String),
    #[error("verification failed: {0}")]
    Verification(String),
    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
