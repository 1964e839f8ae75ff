use thiserror::Error;

use crate::graph::NodeId;

/// Errors raised across graph construction, recovery checks, simulation and estimation.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node not found: {0}")]
    NodeNotFound(String),

    #[error("duplicate node: {0}")]
    DuplicateNode(String),

    #[error("invalid node: {0}")]
    InvalidNode(String),

    #[error("invalid edge {from} -> {to}: {reason}")]
    InvalidEdge {
        from: String,
        to: String,
        reason: String,
    },

    #[error("directed cycle detected: {}", format_cycle(.cycle))]
    CycleDetected { cycle: Vec<NodeId> },

    #[error("invalid query: {0}")]
    InvalidQuery(String),

    #[error("brute-force oracle limited to {limit} nodes, graph has {nodes}")]
    OracleLimitExceeded { nodes: usize, limit: usize },

    #[error("base graph is not an m-graph: {0}")]
    NotAnMGraph(String),

    #[error("invalid shift set for {node}: {reason}")]
    InvalidShiftSet { node: String, reason: String },

    #[error("shifting {child} by R_{node} would create feedback: {child} is an ancestor of the indicator")]
    FeedbackRisk { node: String, child: String },

    #[error("invalid witness ({reason}); offending nodes: {}", join(.offending))]
    InvalidWitness {
        offending: Vec<NodeId>,
        reason: String,
    },

    #[error("scm specification error: {0}")]
    SpecError(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("singular design matrix: {0}")]
    SingularDesign(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("positivity violation: {count} of {total} rows outside the trimming bounds ({detail})")]
    PositivityViolation {
        count: usize,
        total: usize,
        detail: String,
    },

    #[error("bootstrap unstable: {failed} of {total} resamples failed")]
    BootstrapUnstable { failed: usize, total: usize },

    #[error("masked cell accessed: column {column}, row {row}")]
    MaskedCell { column: String, row: usize },

    #[error("unknown column: {0}")]
    UnknownColumn(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

fn format_cycle(cycle: &[NodeId]) -> String {
    cycle
        .iter()
        .map(|n| n.as_str())
        .collect::<Vec<_>>()
        .join(" -> ")
}

fn join(nodes: &[NodeId]) -> String {
    nodes
        .iter()
        .map(|n| n.as_str())
        .collect::<Vec<_>>()
        .join(", ")
}
