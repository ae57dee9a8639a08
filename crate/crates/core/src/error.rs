use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate document id {0:?}")]
    DuplicateId(String),

    #[error("invalid record {qid:?}: {reason}")]
    InvalidRecord { qid: String, reason: String },

    #[error("unknown node {0:?}")]
    UnknownNode(String),

    #[error("invalid pattern {pattern:?}: {message}")]
    Pattern { pattern: String, message: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("missing vector for {0:?}")]
    MissingVector(String),

    #[error("no dense score for candidate {0:?}")]
    MissingScore(String),

    #[error("empty gold set")]
    EmptyGold,

    #[error("rankings disagree on query id: {0:?} vs {1:?}")]
    QueryMismatch(String, String),

    #[error("dense score {score} for {id:?} is outside [0, 1]; enable cosine score mapping")]
    ScoreOutOfRange { id: String, score: f64 },

    #[error("candidate {0:?} is not in the subgraph view")]
    NotACandidate(String),

    #[error("transport error (request {request}): {message}")]
    Transport { request: usize, message: String },

    #[error("unknown question id {0:?}")]
    UnknownQuestion(String),

    #[error("index file: {0}")]
    IndexFormat(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
