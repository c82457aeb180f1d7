use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("relevance score {0} is outside the 0..=3 scale")]
    ScoreOutOfRange(i64),

    #[error("threshold {0} is outside 1..=3")]
    ThresholdOutOfRange(i64),

    #[error("invalid language tag {code:?}: {reason}")]
    InvalidLanguage { code: String, reason: &'static str },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{}:{line}: field `{field}`: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("language {language}: {message}")]
    Shortfall { language: String, message: String },

    #[error("degenerate projection: embedding norm {0:e} below 1e-12")]
    DegenerateProjection(f64),

    #[error("non-finite value in similarity row {row}")]
    NonFinite { row: usize },

    #[error("not enough training data: {0}")]
    InsufficientData(String),

    #[error("no overlapping (query, passage) keys between the two annotations")]
    NoOverlap,

    #[error("kappa undefined: {0}")]
    KappaUndefined(String),

    #[error("empty passage index")]
    EmptyIndex,

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("io error on {}: {source}", path.display())]
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
