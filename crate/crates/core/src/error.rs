use thiserror::Error;
use xplore_tensor::TensorError;

#[derive(Debug, Error)]
pub enum XploreError {
    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: &'static str, found: String },

    #[error("truncated {0}")]
    Truncated(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("row {0} has zero norm")]
    ZeroRow(usize),

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("cluster {0} is empty")]
    EmptyCluster(usize),

    #[error("cluster out of range: {cluster} (k = {k})")]
    ClusterOutOfRange { cluster: usize, k: usize },

    #[error("config mismatch: checkpoint hash {found:016x}, expected {expected:016x}")]
    ConfigMismatch { expected: u64, found: u64 },

    #[error("non-finite {component} loss at step {step}")]
    NonFiniteLoss { component: &'static str, step: u64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config: {0}")]
    Config(String),
}

impl XploreError {
    /// Process exit status: 2 for aborts during computation, 1 for everything
    /// the caller can fix by changing inputs.
    pub fn exit_code(&self) -> i32 {
        match self {
            XploreError::NonFiniteLoss { .. } | XploreError::NonFinite(_) | XploreError::Tensor(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, XploreError>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(XploreError::InvalidArgument(msg.into()))
}
