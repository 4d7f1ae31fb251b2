use std::path::PathBuf;

pub type Result<T, E = QdoseError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum QdoseError {
    #[error(transparent)]
    Core(#[from] qdose_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("stage `{stage}` needs {artifact} (missing {path}); run `{producer}` first")]
    MissingArtifact {
        stage: &'static str,
        artifact: &'static str,
        path: PathBuf,
        producer: &'static str,
    },
}

impl QdoseError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        Self::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }
}
