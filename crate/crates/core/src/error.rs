use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("line {line}: unparseable timestamp {value:?}: {source}")]
    BadTimestamp {
        line: u64,
        value: String,
        #[source]
        source: chrono::ParseError,
    },

    #[error("line {line}: unplug time {unplug} is not after plug time {plug}")]
    InvertedInterval {
        line: u64,
        plug: String,
        unplug: String,
    },

    #[error("unknown station id {0:?}")]
    UnknownStation(String),

    #[error("duplicate station id {0:?}")]
    DuplicateStation(String),

    #[error("grid origin {0} is not on an hour boundary")]
    UnalignedOrigin(String),

    #[error("hour count must be at least 1")]
    EmptyTimeline,

    #[error("invalid hour range [{lo}, {hi}) for a timeline of {len} hours")]
    InvalidRange { lo: usize, hi: usize, len: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("training window for hour {test_hour} would start before the timeline ({offset} hours early)")]
    WindowUnderflow { test_hour: usize, offset: usize },

    #[error("cannot score an empty prediction vector")]
    EmptyScore,

    #[error("no candidate window lengths to search")]
    EmptyCandidates,

    #[error("target occupancy {target} is unreachable (best achievable {achieved:.4})")]
    InfeasibleOccupancy { target: f64, achieved: f64 },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
