use thiserror::Error;

/// Crate-wide error type. Every fallible operation in the library reports
/// through one of these variants.
#[derive(Error, Debug)]
pub enum Error {
    #[error("{op}: shape mismatch, expected {expected:?} but got {got:?}")]
    ShapeMismatch {
        op: &'static str,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("backward requires a scalar loss, got {elements} elements")]
    NotScalar { elements: usize },

    #[error("{op}: non-finite input value in strict mode")]
    NonFiniteInput { op: &'static str },

    #[error("gradcheck: function is not deterministic (two evaluations at the same point differ)")]
    NonDeterministicFunction,

    #[error("invalid class label {label}, expected one of 0..{classes}")]
    InvalidLabel { label: usize, classes: usize },

    #[error("invalid dropout ratio {ratio}, expected [0, 1)")]
    InvalidRatio { ratio: f64 },

    #[error("parameter {name} has no gradient; run backward before stepping")]
    MissingGradient { name: String },

    #[error("anchor generation needs at least one scale and one ratio")]
    EmptyConfig,

    #[error("degenerate box ({x1}, {y1}, {x2}, {y2})")]
    DegenerateBox { x1: f64, y1: f64, x2: f64, y2: f64 },

    #[error("RoI {index} does not intersect the feature map")]
    EmptyRoI { index: usize },

    #[error("RoI pooling mask length {mask} does not match gradient length {grad}")]
    MaskShapeMismatch { mask: usize, grad: usize },

    #[error("unknown layer {0:?}")]
    UnknownLayer(String),

    #[error("RoI sampling produced an empty minibatch")]
    NoValidRoIs,

    #[error("scene generation config is infeasible: {0}")]
    ConfigInfeasible(String),

    #[error("landmarks are degenerate (no spatial extent)")]
    DegenerateLandmarks,

    #[error("corrupt dataset manifest: {0}")]
    CorruptManifest(String),

    #[error("checksum mismatch for {0}")]
    ChecksumMismatch(String),

    #[error("dataset not found at {0}")]
    DatasetMissing(String),

    #[error("training diverged at iteration {iteration}: loss is not finite")]
    DivergedLoss { iteration: usize },

    #[error("checkpoint is incompatible: {0}")]
    ShapeIncompatible(String),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("no ground-truth boxes in evaluation set")]
    NoGroundTruth,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
