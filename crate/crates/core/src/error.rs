use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("degenerate rotation: {0}")]
    DegenerateRotation(&'static str),
    #[error("invalid rotation matrix: orthonormality error {0:.3e}")]
    InvalidRotation(f64),
    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid skeleton: {0}")]
    InvalidSkeleton(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("numeric fault at {context} (layer {layer:?})")]
    NumericFault {
        context: String,
        layer: Option<usize>,
    },
    #[error("tape is stale: parameters changed since the forward pass")]
    StaleTape,
    #[error("sequence too short for window: need {needed} frames, have {available}")]
    SkipWindow { needed: usize, available: usize },
    #[error("too few sequences to split: {0}")]
    TooFewSequences(usize),
    #[error("infeasible reach target after {attempts} attempts")]
    InfeasibleReach { attempts: usize },
    #[error("goal schedule ordering collapsed: {0}")]
    ScheduleOrder(String),
    #[error("model mismatch: record was produced by model {expected}, got {got}")]
    ModelMismatch { expected: String, got: String },
    #[error("skeleton mismatch: file has skeleton {expected}, runtime skeleton is {got}")]
    SkeletonMismatch { expected: String, got: String },
    #[error("unsupported format version {found} (supported: {supported})")]
    VersionMismatch { found: u32, supported: u32 },
    #[error("corrupt file: {0}")]
    CorruptFile(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
