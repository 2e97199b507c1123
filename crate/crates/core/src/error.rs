use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("duplicate key point {0}")]
    DuplicateKeyPoint(i64),
    #[error("point {0} is not a member of the key sequence")]
    PointNotInKey(i64),
    #[error("key element {value} outside [1, {kappa}]")]
    KeyOutOfRange { value: i64, kappa: i64 },
    #[error("parse error on line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("invalid graph: {0}")]
    Validation(String),
    #[error("graph is not connected")]
    NotConnected,
    #[error("edge ({0}, {1}) has no channel assignment")]
    MissingAssignment(usize, usize),
    #[error("power iteration did not converge after {0} iterations")]
    NoConvergence(usize),
    #[error("node {node} has security degree {degree} but only {channels} channels exist")]
    DegreeExceedsChannels {
        node: usize,
        degree: usize,
        channels: usize,
    },
    #[error("step size {alpha} violates alpha < 1/{max_degree}")]
    StepSizeTooLarge { alpha: f64, max_degree: usize },
    #[error("spectral norm {0} outside (0, 1)")]
    InvalidLambda(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("key distribution did not terminate within {0} blocks")]
    MaxBlocksExceeded(usize),
    #[error("consensus did not converge within {0} rounds")]
    RoundCapExceeded(usize),
    #[error("invalid adversary spec: {0}")]
    InvalidSpec(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
