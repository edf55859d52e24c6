use std::path::PathBuf;

/// Errors produced anywhere in the adaptation pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("truncated N-MNIST record at byte offset {offset} ({remaining} trailing bytes)")]
    Decode { offset: usize, remaining: usize },

    #[error("event at index {index} out of bounds: ({x}, {y}) on a {width}x{height} sensor")]
    Bounds {
        index: usize,
        x: u32,
        y: u32,
        width: u32,
        height: u32,
    },

    #[error("cannot encode event {index}: {reason}")]
    Encode { index: usize, reason: String },

    #[error("manifest error at {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },

    #[error("cannot ingest {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid augmentation policy: {0}")]
    Policy(String),

    #[error("shape contract violated in {context}: expected {expected:?}, got {actual:?}")]
    Shape {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("label {label} out of range for {classes} classes")]
    Label { label: usize, classes: usize },

    #[error("degenerate input to {0}: zero-norm vector")]
    Degenerate(&'static str),

    #[error("non-finite value in loss term `{term}`")]
    NonFinite { term: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
