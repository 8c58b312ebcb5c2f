use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] otmatch_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("checkpoint format version {found}, expected {expected}")]
    CheckpointVersion { expected: u32, found: u32 },
    /// Non-finite loss; the offending batch and threshold state were dumped to `diagnostic`.
    #[error("non-finite loss at step {step}; diagnostic written to {}", diagnostic.display())]
    NonFinite { step: u64, diagnostic: PathBuf },
}

pub type Result<T> = std::result::Result<T, RunError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> RunError {
    let path = path.into();
    move |source| RunError::Io { path, source }
}
