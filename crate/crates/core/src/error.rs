use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("edge ({u}, {v}) references a node outside [0, {num_nodes})")]
    NodeOutOfBounds { u: usize, v: usize, num_nodes: usize },

    #[error("feature matrix has {found} rows, expected {expected}")]
    FeatureRows { expected: usize, found: usize },

    #[error("feature matrix must have at least one column")]
    EmptyFeatures,

    #[error("label vector has length {found}, expected {expected}")]
    LabelLength { expected: usize, found: usize },

    #[error("label at node {index} is {value}, expected 0 or 1")]
    LabelValue { index: usize, value: u8 },

    #[error("{op}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("matrix buffer of length {len} cannot hold {rows}x{cols}")]
    BufferLength { rows: usize, cols: usize, len: usize },

    #[error("undefined metric: {0}")]
    UndefinedMetric(&'static str),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite value in {what} at row {row}")]
    NonFinite { what: &'static str, row: usize },

    #[error("non-finite loss at epoch {epoch} (parameter norms {param_norms:?})")]
    NonFiniteLoss { epoch: usize, param_norms: Vec<f64> },

    #[error("attention matrix is not row-stochastic: {0:?}")]
    MalformedAttention([[f64; 2]; 2]),

    #[error("infeasible degree: {0}")]
    InfeasibleDegree(String),

    #[error("community assignment covers {found} nodes, graph has {expected}")]
    AssignmentLength { expected: usize, found: usize },

    #[error("invalid tensor handle {0}")]
    UnknownTensor(usize),
}
