use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("duplicate actor id `{0}`")]
    DuplicateActor(String),

    #[error("invalid value: {0}")]
    Invalid(String),

    #[error("unknown topic `{0}`")]
    UnknownTopic(String),

    #[error("missing follower count for actor `{0}`")]
    MissingFollowers(String),

    #[error("graph has {0} node(s); normalised metrics need at least 2")]
    TooFewNodes(usize),

    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),

    #[error("need at least {needed} rows, got {got}")]
    TooFewRows { needed: usize, got: usize },

    #[error("need at least {k} distinct points, got {got}")]
    TooFewDistinct { k: usize, got: usize },

    #[error("series length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("series of length {len} is too short for lag {lag}")]
    SeriesTooShort { len: usize, lag: usize },

    #[error("design matrix is rank deficient in column(s): {}", .0.join(", "))]
    RankDeficient(Vec<String>),

    #[error("group `{0}` has no members")]
    EmptyGroup(String),

    #[error("window misalignment: {0}")]
    WindowMismatch(String),

    #[error("graphml: {0}")]
    GraphMl(String),

    #[error("config: {0}")]
    Config(String),

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
