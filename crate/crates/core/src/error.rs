//! Error type shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error in {path}: {msg}")]
    Parse { path: PathBuf, msg: String },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("grid mismatch: expected {expected}, got {got}")]
    GridMismatch { expected: String, got: String },
    #[error("expected {expected} values, got {got}")]
    ValueCount { expected: usize, got: usize },
    #[error("non-finite value at index {index}")]
    NonFinite { index: usize },
    #[error("membership value {value} for label {label:?} outside [0, 1]")]
    MembershipRange { label: String, value: f64 },
    #[error("a registered set needs at least 2 examples, got {got}")]
    TooFewExamples { got: usize },
    #[error("label layout error: {0}")]
    LabelLayout(String),
    #[error("operation requires label maps, but the set has none")]
    MissingLabels,
    #[error("point cloud is empty")]
    EmptyCloud,
    #[error("point dimension mismatch: expected {expected}, got {got}")]
    PointDim { expected: usize, got: usize },
    #[error("lambda must be a positive finite number, got {0}")]
    InvalidLambda(f64),
    #[error("linear system is singular")]
    SingularSystem,
    #[error("point with radius {radius} lies outside the closed unit disk")]
    OutsideUnitDisk { radius: f64 },
    #[error("operation requires a 2D grid")]
    NotTwoDimensional,
    #[error("degenerate warp: zero mean displacement cannot be scaled to a positive target")]
    DegenerateWarp,
    #[error("label {label:?} has zero total volume")]
    ZeroVolumeLabel { label: String },
    #[error("label {label:?} produced a non-positive weight")]
    DegenerateWeight { label: String },
    #[error("all labels are empty everywhere; overlap is undefined")]
    AllLabelsEmpty,
    #[error("generalized overlap needs at least 2 label maps, got {got}")]
    TooFewMaps { got: usize },
    #[error("ranking needs at least 2 sets, got {got}")]
    TooFewSets { got: usize },
    #[error("line fit needs at least 3 points, got {got}")]
    TooFewPoints { got: usize },
    #[error("line fit is degenerate: the x values have zero variance")]
    DegenerateFit,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }
}
