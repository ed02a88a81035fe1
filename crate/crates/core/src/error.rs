use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("node index {node} out of range for {n_nodes} nodes")]
    NodeOutOfRange { node: usize, n_nodes: usize },
    #[error("hyperedge {edge:?} has fewer than two members")]
    EdgeTooSmall { edge: Vec<usize> },
    #[error("hyperedge {edge:?} lists node {node} more than once")]
    RepeatedNode { edge: Vec<usize>, node: usize },
    #[error("hyperedge of size {size} exceeds the maximum arity {max}")]
    ArityTooLarge { size: usize, max: usize },
    #[error("probability {prob} for size {size} is outside [0, 1]")]
    InvalidProbability { size: usize, prob: f64 },
    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },
    #[error("kernel expects {expected} neighbour values, got {got}")]
    ArityMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite state at step {step}")]
    NonFinite { step: usize },
    #[error("unknown dynamics family `{0}` (valid: kuramoto, si, mcm, diffusion)")]
    UnknownFamily(String),
    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },
    #[error("no network for hyperedges of size {0}")]
    MissingNetwork(usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
