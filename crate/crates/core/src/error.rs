use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid pose: {0}")]
    InvalidPose(String),

    #[error("invalid point cloud: {0}")]
    InvalidCloud(String),

    #[error("empty cloud")]
    EmptyCloud,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point behind camera (z = {z})")]
    BehindCamera { z: f64 },

    #[error("insufficient matches: {found} < {required}")]
    InsufficientMatches { found: usize, required: usize },

    #[error("insufficient measurement diversity (rank {rank} < {required})")]
    InsufficientDiversity { rank: usize, required: usize },

    #[error("loss must be positive, got {0}")]
    NonPositiveLoss(f64),

    #[error("scheduler is not in the optimizing phase")]
    NotOptimizing,

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("trainer failed at epoch {epoch}: {message}")]
    Trainer { epoch: usize, message: String },

    #[error("{0}")]
    Config(String),

    #[error("missing artifact from stage `{stage}`: {path}")]
    MissingArtifact { stage: &'static str, path: String },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed file {path}: {message}")]
    Format { path: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
