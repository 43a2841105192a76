use thiserror::Error;

pub type Result<T, E = LabError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("rule produced non-finite value {value} at node {node:?}; offset the grid or the singularity")]
    NonFiniteSample { node: Vec<f64>, value: f64 },

    #[error("grids differ: {0}")]
    GridMismatch(String),

    #[error("ball is empty")]
    EmptyBall,

    #[error("dilated ball escapes the box; largest valid k is {largest_valid_k:?}")]
    DilationEscapesBox { largest_valid_k: Option<u32> },

    #[error("unknown kernel `{0}`")]
    UnknownKernel(String),

    #[error("kernel form not supported here: {0}")]
    UnsupportedKernel(String),

    #[error("probe plan refused: {0}")]
    ProbePlan(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("resource limit: {0}")]
    ResourceLimit(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(msg: impl Into<String>) -> LabError {
    LabError::InvalidArgument(msg.into())
}
