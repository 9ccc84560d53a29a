//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("rotation angle within {0:e} of pi; principal log branch undefined")]
    AngleNearPi(f64),
    #[error("point behind camera (z = {z})")]
    BehindCamera { z: f64 },
    #[error("forward cache does not match this render call")]
    MissingForwardCache,
    #[error("grid subdivision {grid_k} exceeds image dimension {dim}")]
    BadGrid { grid_k: usize, dim: usize },
    #[error("no masked pixels with positive confidence")]
    EmptyInput,
    #[error("mask has no foreground pixels")]
    EmptyMask,
    #[error("empty mask on at least one side of the edge")]
    ZeroMask,
    #[error("degenerate correspondences: {available} usable, {required} required")]
    DegenerateCorrespondences { required: usize, available: usize },
    #[error("node {0} has no surviving edges")]
    Disconnected(usize),
    #[error("tracking diverged: masked photometric loss {loss} exceeds bound {bound}")]
    TrackLost { loss: f64, bound: f64 },
    #[error("no overlap: a frame of the pair has an empty mask")]
    NoOverlap,
    #[error("unknown scene spec: {0}")]
    BadSpec(String),
    #[error("malformed file at byte {offset}: {reason}")]
    Format { offset: u64, reason: String },
    #[error("trajectory lengths differ: {a} vs {b}")]
    LengthMismatch { a: usize, b: usize },
    #[error("mask bounding box has zero area")]
    DegenerateExtent,
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("image codec: {0}")]
    Image(String),
}

impl Error {
    pub fn format(offset: u64, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
