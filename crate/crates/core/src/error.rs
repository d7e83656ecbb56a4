use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty index")]
    EmptyIndex,

    #[error("insufficient points: need {needed}, got {got}")]
    InsufficientPoints { needed: usize, got: usize },

    #[error("truncated scan: {len} bytes is not a multiple of 16")]
    TruncatedScan { len: u64 },

    #[error("malformed pose line {line}: {reason}")]
    MalformedPose { line: usize, reason: String },

    #[error("antipodal point")]
    AntipodalPoint,

    #[error("pattern too sparse: {0} points")]
    PatternTooSparse(usize),

    #[error("degenerate pattern")]
    DegeneratePattern,

    #[error("degenerate polar point")]
    DegeneratePolarPoint,

    #[error("no line correspondences")]
    NoLineCorrespondences,

    #[error("empty line cloud")]
    EmptyLineCloud,

    #[error("no valid segments: trajectory shorter than the shortest evaluation length")]
    NoValidSegments,

    #[error("optimization stalled")]
    OptimizationStalled,

    #[error("pose graph: {0}")]
    Graph(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("frame {frame}: {source}")]
    Frame {
        frame: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
