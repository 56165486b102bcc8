use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced anywhere in the synthesis toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("area fraction undefined: base mask is empty")]
    UndefinedBase,

    #[error("backend `{backend}` unreachable after {retries} retries: {message}")]
    Transport {
        backend: String,
        retries: u32,
        message: String,
    },

    #[error("could not parse backend answer: {raw:?}")]
    Parse { raw: String },

    #[error("unknown category `{0}`")]
    UnknownCategory(String),

    #[error("asset `{0}` not found")]
    NotFound(String),

    #[error("asset `{asset_id}` is {state}, only pending assets can be decided")]
    StateConflict { asset_id: String, state: String },

    #[error("matching pool has no candidates")]
    NoCandidates,

    #[error("mask generation failed after {attempts} attempts: last rejection was {reason}")]
    GenerationFailed { attempts: u32, reason: String },

    #[error("intra-cluster distance undefined for a cluster of {0} member(s)")]
    UndefinedDistance(usize),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image codec: {0}")]
    Image(#[from] image::ImageError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps the error with the name of the pipeline stage that raised it.
    pub fn at_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }

    /// The innermost error, looking through stage tags.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }
}
