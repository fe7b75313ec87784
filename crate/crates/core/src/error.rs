//! Crate-wide error type. Pipeline stages surface these with a stage tag so
//! the CLI can report which stage failed.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("scenario: {0}")]
    Scenario(String),

    #[error("scenario: trajectory point {index} at ({x:.3}, {y:.3}) leaves the configured area")]
    TrajectoryOutOfArea { index: usize, x: f64, y: f64 },

    #[error("scenario: trajectory of {trajectory} points does not fit into {num_users} users")]
    TrajectoryTooLong { trajectory: usize, num_users: usize },

    #[error("channel: {0}")]
    Channel(String),

    #[error("channel: sin_angle {0} outside [-1, 1]")]
    InvalidSinAngle(f64),

    #[error("channel: position {index} is {distance:.4} m from a radiator (minimum 0.1 m)")]
    PositionTooClose { index: usize, distance: f64 },

    #[error("features: CSI row {0} is all zero, cannot normalize")]
    ZeroCsiRow(usize),

    #[error("features: {0}")]
    Features(String),

    #[error("nn: {0}")]
    Network(String),

    #[error("nn: shape mismatch, expected {expected}, got {got}")]
    ShapeMismatch { expected: String, got: String },

    #[error("constraints: {0}")]
    Constraints(String),

    #[error("constraints: index {index} out of range for {len} datapoints")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("metrics: neighborhood size K={k} invalid for N={n} (need 1 <= K < (2N-1)/3)")]
    KOutOfRange { k: usize, n: usize },

    #[error("metrics: reference points are degenerate (all identical)")]
    DegenerateReference,

    #[error("metrics: {0}")]
    Metrics(String),

    #[error("train: loss became non-finite at epoch {epoch}, step {step}")]
    Diverged { epoch: usize, step: usize },

    #[error("pipeline: {0}")]
    Pipeline(String),

    #[error("config: {0}")]
    Config(String),

    #[error("config: {file}:{line}: {msg}")]
    ConfigParse { file: String, line: usize, msg: String },

    #[error("io: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format: {path}: {msg}")]
    Format { path: PathBuf, msg: String },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format { path: path.into(), msg: msg.into() }
    }
}
