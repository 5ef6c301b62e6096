use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: usize, message: String },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value at row {row}, column {column}")]
    NonFinite { row: usize, column: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("homology order {requested} needs at least {needed} vertices, graph has {vertices}")]
    OrderTooLarge {
        requested: usize,
        needed: usize,
        vertices: usize,
    },

    #[error("diagram too large for exact bottleneck matching: {points} points (limit {limit})")]
    SizeLimit { points: usize, limit: usize },

    #[error("empty measure sequence")]
    EmptySequence,

    #[error("k = {k} exceeds the {distinct} distinct support points of the mean measure")]
    KTooLarge { k: usize, distinct: usize },

    #[error("too few measures: {have} available, {need} required")]
    TooFewMeasures { have: usize, need: usize },

    #[error("duplicate centers at indices {0} and {1}")]
    DuplicateCenter(usize, usize),

    #[error("too few samples: {have} available, {need} required")]
    TooFewSamples { have: usize, need: usize },

    #[error("degenerate covariance: {0}")]
    DegenerateCovariance(String),

    #[error("invalid level: alpha = {alpha}, delta = {delta} (need 0 < delta < alpha < 1)")]
    InvalidLevel { alpha: f64, delta: f64 },

    #[error("too few windows: {have} (need at least {need})")]
    TooFewWindows { have: usize, need: usize },

    #[error("channel mismatch: model expects {expected} channels, series has {found}")]
    ChannelMismatch { expected: usize, found: usize },

    #[error("model format version {found} is not supported (this build reads up to {supported})")]
    VersionMismatch { found: u32, supported: u32 },

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("labels must contain both classes")]
    SingleClass,

    #[error("labels contain no positive timestamp")]
    NoPositives,

    #[error("position {position} out of range for series of length {length}")]
    PositionOutOfRange { position: usize, length: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
