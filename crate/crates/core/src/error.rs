use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("integrity error: {0}")]
    Integrity(String),
    #[error("channel {channel} is degenerate (zero standard deviation)")]
    DegenerateChannel { channel: usize },
    #[error("25x25 window centered at ({row}, {col}) exceeds raster bounds {height}x{width}")]
    OutOfBounds {
        row: usize,
        col: usize,
        height: usize,
        width: usize,
    },
    #[error("window {height}x{width} is smaller than the 25x25 receptive field")]
    WindowTooSmall { height: usize, width: usize },
    #[error("config error: {0}")]
    Config(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("unsupported bank filter size {0}")]
    UnsupportedFilter(usize),
    #[error("no adversarial category: the problem has a single category")]
    NoAdversary,
    #[error("label {label} out of range for {classes} categories")]
    Label { label: usize, classes: usize },
    #[error("unsatisfiable sampler config: {0}")]
    Unsatisfiable(String),
    #[error("cannot compose batch: {0}")]
    CannotComposeBatch(String),
    #[error("undefined metric: {0}")]
    UndefinedMetric(String),
    #[error("training diverged in {stage} at iteration {iteration}: {reason}")]
    Divergence {
        stage: String,
        iteration: usize,
        reason: String,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Coarse classification used to pick process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::Config(_)
            | Error::UnsupportedFilter(_)
            | Error::Unsatisfiable(_)
            | Error::WindowTooSmall { .. } => ErrorClass::Config,
            Error::Divergence { .. } | Error::DegenerateChannel { .. } => ErrorClass::Numerical,
            _ => ErrorClass::Data,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
