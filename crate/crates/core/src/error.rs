use std::path::PathBuf;

use thiserror::Error;

use crate::toytrain::TrainTrace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("zero-length vector")]
    ZeroVector,
    #[error("feature vector is collinear with the weight vector; plane of variations undefined")]
    CollinearPlaneUndefined,
    #[error("vector has an out-of-plane component of relative size {0:e}")]
    PlaneMismatch(f64),
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid feature vector: {0}")]
    InvalidFeatureVector(String),
    #[error("invalid classifier head: {0}")]
    InvalidHead(String),
    #[error("classes {0} and {1} have identical weights (zero differential vector)")]
    DegenerateHead(usize, usize),
    #[error("feature vector lies on the boundary between classes {0:?}")]
    BoundaryTie(Vec<usize>),
    #[error("at least {required} classes required, head has {found}")]
    TooFewClasses { required: usize, found: usize },
    #[error("coordinate {0} is negative in non-negative mode")]
    NegativeCoordinate(usize),
    #[error("head carries a bias; sensitivity analysis needs a bias-free head (use fold-out)")]
    BiasNotSupported,
    #[error("empty batch")]
    EmptyBatch,
    #[error("feature set has a single class")]
    SingleClass,
    #[error("central vector of class {0} is (numerically) zero")]
    DegenerateCentroid(usize),
    #[error("class {class} has {found} vectors, at least {required} required")]
    ClassTooSmall { class: usize, found: usize, required: usize },
    #[error("class sets differ between splits: {0}")]
    ClassMismatch(String),
    #[error("zero denominator for class {0}")]
    ZeroDenominator(usize),
    #[error("sequence has zero variance")]
    DegenerateVariance,
    #[error("sequences must have equal length >= {min}, got {left} and {right}")]
    LengthMismatch { left: usize, right: usize, min: usize },
    #[error("k = {k} must be smaller than the number of vectors ({m})")]
    KTooLarge { k: usize, m: usize },
    #[error("k = {0} must be odd")]
    EvenK(usize),
    #[error("need at least 2 instances with >= 2 points of class {class}, found {found}")]
    InsufficientInstances { class: usize, found: usize },
    #[error("invalid specification: {0}")]
    BadSpec(String),
    #[error("training diverged at epoch {epoch} (non-finite loss)")]
    DivergenceDetected { epoch: usize, trace: Box<TrainTrace> },
    #[error("dataset too small to split: {0} samples")]
    TooSmall(usize),
    #[error("modalities are not aligned: {0}")]
    AlignmentMismatch(String),
    #[error("{path}:{line}:{column}: {message}")]
    Parse { path: String, line: u64, column: usize, message: String },
    #[error("{path}:{line}: unknown label `{label}`")]
    UnknownLabel { path: String, line: u64, label: String },
    #[error("duplicate class name `{0}`")]
    DuplicateClassName(String),
    #[error("digest mismatch for {path}: manifest has {expected}, file has {actual}")]
    DigestMismatch { path: PathBuf, expected: String, actual: String },
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    /// Process exit code: 2 for I/O failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io { .. } => 2,
            _ => 1,
        }
    }
}
