use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by tile, metric, loss, and simulator operations.
#[derive(Debug, Error)]
pub enum Error {
    #[error("pixel buffer length {actual} does not match {width}x{height}x{channels}")]
    PixelBufferSize {
        width: u32,
        height: u32,
        channels: u32,
        actual: usize,
    },

    #[error("expected a {expected}-channel tile, got {actual} channels")]
    ChannelCount { expected: u32, actual: u32 },

    #[error("tile dimensions {a_width}x{a_height} and {b_width}x{b_height} do not match")]
    DimensionMismatch {
        a_width: u32,
        a_height: u32,
        b_width: u32,
        b_height: u32,
    },

    #[error("shape mismatch: {context}")]
    ShapeMismatch { context: String },

    #[error("quadkey level {level} exceeds the maximum of {max} for this key form")]
    LevelOverflow { level: u8, max: u8 },

    #[error("quadkey digit {digit} at position {index} is not in 0..=3")]
    InvalidQuadrantDigit { digit: u8, index: usize },

    #[error("quadkey timestamp {timestamp} does not fit in 32 bits")]
    TimestampOverflow { timestamp: u64 },

    #[error("not a valid 16-byte quadkey: {reason}")]
    MalformedKey { reason: String },

    #[error("input collection is empty: {context}")]
    EmptyInput { context: String },

    #[error("non-finite value encountered in {context}")]
    NonFinite { context: String },

    #[error("feature footprint {footprint} exceeds the {width}x{height} tile bounds")]
    FootprintOutOfBounds {
        footprint: String,
        width: u32,
        height: u32,
    },

    #[error("corpus at {root} is flagged as the '{split}' split and must not be augmented")]
    SplitGuard { root: PathBuf, split: String },

    #[error("divergence detected at step {step}: loss {loss}")]
    Divergence { step: u64, loss: f64 },

    #[error("invalid configuration: {context}")]
    InvalidConfig { context: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
