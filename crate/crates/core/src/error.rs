use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("duplicate asset id `{0}`")]
    DuplicateId(String),

    #[error("asset `{id}`: {message}")]
    InvalidAsset { id: String, message: String },

    #[error("invalid room: {0}")]
    InvalidRoom(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid relation parameters: {0}")]
    RelationParams(String),

    #[error(
        "point_towards between `{subject}` and `{target}`: positions coincide, direction undefined"
    )]
    DegenerateDirection { subject: String, target: String },

    #[error("relation {relation}: unknown asset `{id}`")]
    UnresolvedAsset { relation: String, id: String },

    #[error("asset `{id}` does not fit inside the room at its current rotation")]
    InfeasibleProjection { id: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("optimization aborted at iteration {iteration}: {message}")]
    NonFiniteLoss { iteration: usize, message: String },

    #[error("render: {0}")]
    Render(String),

    #[error("replay cache miss for request digest {digest}")]
    CacheMiss { digest: String },

    #[error("VLM endpoint returned status {status}: {body}")]
    HttpStatus { status: u16, body: String },

    #[error("VLM transport error: {0}")]
    Transport(String),

    #[error("VLM is not configured: {0}")]
    NotConfigured(String),

    #[error("{0}")]
    Precondition(String),

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
