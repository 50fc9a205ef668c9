use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("node {node} out of range for a graph with {n} nodes")]
    NodeOutOfRange { node: usize, n: usize },

    #[error("invalid partition: {0}")]
    Partition(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("edge {edge} is collocated (length {length:e})")]
    Collocation { edge: usize, length: f64 },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    Asymmetric(f64),

    #[error("framework is not infinitesimally bearing rigid (rank {rank}, expected {expected})")]
    NotRigid { rank: usize, expected: usize },

    #[error("network is not bearing localizable (lambda_min(B_ff) = {lambda_min:e})")]
    NotLocalizable { lambda_min: f64 },

    #[error("infeasible bearing target: {0}")]
    InfeasibleTarget(String),

    #[error("leader {agent} drifted from its target by {drift:e}")]
    LeaderDrift { agent: usize, drift: f64 },

    #[error("invalid bound parameters: {0}")]
    InvalidParams(String),

    #[error("invalid integrator settings: {0}")]
    InvalidSettings(String),

    #[error("trace was aborted: {0}")]
    AbortedTrace(String),
}
