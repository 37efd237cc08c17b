use std::path::PathBuf;

/// Errors raised anywhere in the pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("empty softmax domain")]
    EmptySoftmax,

    #[error("shape mismatch in {op}: {detail}")]
    Shape { op: &'static str, detail: String },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("entity not in KG: {0}")]
    UnknownEntity(String),

    #[error("relation not in KG: {0}")]
    UnknownRelation(String),

    #[error("exhausted negative space for ({head}, {relation}, {tail})")]
    ExhaustedNegatives {
        head: String,
        relation: String,
        tail: String,
    },

    #[error("isolated entity: {0}")]
    IsolatedEntity(String),

    #[error("no per-relation transform (model is in same-space mode)")]
    NoRelationTransform,

    #[error("overlapping mentions {0} and {1}")]
    OverlappingMentions(usize, usize),

    #[error("no pairs to propagate: {0} entities")]
    NoPairs(usize),

    #[error("no non-NA gold")]
    NoNonNaGold,

    #[error("no discordant pairs")]
    NoDiscordantPairs,

    #[error("training aborted at epoch {epoch}: non-finite loss ({hint})")]
    Diverged { epoch: usize, hint: String },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("checkpoint digest check failed: {0}")]
    Digest(String),

    #[error("unsupported checkpoint version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Shape {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
