//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("line {line}: {msg}")]
    MalformedRecord { line: u64, msg: String },

    #[error("missing column `{0}`")]
    MissingColumn(String),

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("corpus has no destination data")]
    NoDestinations,

    #[error("corpus has no timestamp data")]
    NoTimestamps,

    #[error("invalid coordinate for `{id}`: lat={lat}, lon={lon}")]
    InvalidCoordinate { id: String, lat: f64, lon: f64 },

    #[error("binomial arguments out of range: k={k} > n={n}")]
    BinomialRange { n: u64, k: u64 },

    #[error("partition does not match corpus: {0}")]
    PartitionMismatch(String),

    #[error("empty cluster in partition")]
    EmptyCluster,

    #[error("invalid segmentation: {0}")]
    InvalidSegmentation(String),

    #[error("unknown cluster id {0}")]
    UnknownCluster(u32),

    #[error("cannot merge a cluster with itself (id {0})")]
    SameCluster(u32),

    #[error("segments {a} and {b} are not adjacent")]
    NonAdjacentSegments { a: u32, b: u32 },

    #[error("move would empty cluster {0}")]
    MoveWouldEmptyCluster(u32),

    #[error("shift would empty segment {0}")]
    ShiftWouldEmptySegment(u32),

    #[error("no such segment boundary: index {0}")]
    InvalidBoundary(usize),

    #[error("target cluster count {requested} is unreachable; nearest achievable is {nearest}")]
    UnreachableTarget { requested: u32, nearest: u32 },

    #[error("model was fitted against a different corpus (digest {expected} != {actual})")]
    DigestMismatch { expected: String, actual: String },

    #[error("invalid model document: {0}")]
    InvalidModel(String),

    #[error("missing coordinates for report; supply a coordinate table")]
    MissingCoordinates,

    #[error("{0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
