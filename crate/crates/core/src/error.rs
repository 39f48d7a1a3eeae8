use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("layer {layer}: expected input width {expected}, found {found}")]
    LayerShape {
        layer: usize,
        expected: usize,
        found: usize,
    },

    #[error("invalid shape {0:?}: every dimension must be >= 1 and match the data length")]
    InvalidShape(Vec<usize>),

    #[error("domain error in {op}: {msg}")]
    DomainError { op: &'static str, msg: String },

    #[error("backward root must be scalar, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("parameter must be nonzero")]
    ZeroParameter,

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("support mismatch: q_{0} > 0 but p_{0} == 0")]
    SupportMismatch(usize),

    #[error("orientation does not cover edge {{{0}, {1}}}")]
    IncompleteOrientation(usize, usize),

    #[error("weight pattern does not match the edge set at ({0}, {1})")]
    WeightPatternMismatch(usize, usize),

    #[error("node {0} has no neighbours")]
    IsolatedNode(usize),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("non-finite gradient at step {step} (parameter tensor {param})")]
    NonFiniteGradient { step: usize, param: usize },

    #[error("non-finite loss at step {0}")]
    NonFiniteLoss(usize),

    #[error("minibatch of {batch} requested from {n} samples")]
    BatchTooLarge { batch: usize, n: usize },

    #[error("mask is empty")]
    EmptyMask,

    #[error("non-finite or zero class probability")]
    NonFiniteProbability,

    #[error("bad magic number {found:#x} in {path} (expected {expected:#x})")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("truncated file {0}")]
    TruncatedFile(PathBuf),

    #[error("count mismatch: {0}")]
    CountMismatch(String),

    #[error("unknown node id {id} at {path}:{line}")]
    UnknownNodeId {
        path: PathBuf,
        line: usize,
        id: String,
    },

    #[error("malformed line {line} in {path}: {msg}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("split fractions must be non-negative and sum to 1, got {0:?}")]
    BadFractions(Vec<f64>),

    #[error("bad checkpoint: {0}")]
    BadCheckpoint(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn shape(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::ShapeMismatch {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
