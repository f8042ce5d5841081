use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing dataset file {0}")]
    MissingFile(PathBuf),

    #[error("{file}:{line}: {message}")]
    ParseError { file: String, line: usize, message: String },

    #[error("{what} index {index} out of range (bound {bound})")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        bound: usize,
    },

    #[error("duplicate edge ({u}, {v}) on lines {first_line} and {second_line}")]
    DuplicateEdge {
        u: usize,
        v: usize,
        first_line: usize,
        second_line: usize,
    },

    #[error("self-loop on node {node} at line {line}")]
    SelfLoop { node: usize, line: usize },

    #[error("node {0} appears in more than one split")]
    SplitOverlap(usize),

    #[error("degenerate configuration: {0}")]
    DegenerateConfig(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),

    #[error("index set is empty")]
    EmptyIndexSet,

    #[error("optimizer step requested before backward populated gradients")]
    NotBackwarded,

    #[error("loss became non-finite at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("nothing to train: both weight and mask training disabled")]
    NothingToTrain,

    #[error("pruning would leave no active {0}")]
    EmptyActiveSet(&'static str),

    #[error("candidate set is empty")]
    EmptyCandidateSet,

    #[error("swap set entry {index} has the wrong polarity in the {universe} mask")]
    SetViolation { universe: &'static str, index: usize },

    #[error("degenerate masks: {0}")]
    DegenerateMasks(String),

    #[error("mask universes disagree: {0}")]
    UniverseMismatch(String),

    #[error("dense baseline diverged: {0}")]
    BaselineDivergence(String),

    #[error("record list is empty")]
    EmptyRecords,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown {kind} '{name}'")]
    UnknownName { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(file: &str, line: usize, message: impl Into<String>) -> Self {
        Error::ParseError {
            file: file.to_string(),
            line,
            message: message.into(),
        }
    }
}
