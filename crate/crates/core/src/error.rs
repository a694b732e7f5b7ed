use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing binding for placeholder `{0}`")]
    MissingBinding(String),

    #[error("unknown prompt template `{0}`")]
    UnknownTemplate(String),

    #[error("unknown stage `{0}`")]
    UnknownStage(String),

    #[error("label series keys differ at position {position}")]
    KeyMismatch { position: usize },

    #[error("label series lengths differ ({left} vs {right})")]
    LengthMismatch { left: usize, right: usize },

    #[error("no verdicts to vote on")]
    EmptyVote,

    #[error("empty keyword set")]
    EmptyKeywords,

    #[error("endpoint `{endpoint}`: {message}")]
    Gateway { endpoint: String, message: String },

    #[error("missing artifact {path}; run `{stage}` first")]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }
}
