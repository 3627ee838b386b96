use thiserror::Error;

/// Errors produced anywhere in the pipeline.
///
/// Each variant belongs to one of three exit classes used by the command-line
/// front end: configuration problems, numeric failures and infeasible data.
#[derive(Debug, Error)]
pub enum FriError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("rank-deficient design matrix: delays {first} and {second} (indices {i}, {j}) give collinear columns")]
    RankDeficient {
        i: usize,
        j: usize,
        first: f64,
        second: f64,
    },

    #[error("infeasible data request: {0}")]
    Infeasible(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),
}

impl FriError {
    /// Process exit code for the error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            FriError::Config(_) | FriError::Shape { .. } | FriError::Json(_) | FriError::Io(_) => 2,
            FriError::Numeric(_) | FriError::RankDeficient { .. } => 3,
            FriError::Infeasible(_) => 4,
        }
    }

    /// Short machine-readable class name.
    pub fn kind(&self) -> &'static str {
        match self {
            FriError::Config(_) => "config",
            FriError::Shape { .. } => "shape",
            FriError::Json(_) => "config",
            FriError::Io(_) => "io",
            FriError::Numeric(_) => "numeric",
            FriError::RankDeficient { .. } => "rank_deficient",
            FriError::Infeasible(_) => "infeasible",
        }
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        FriError::Config(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        FriError::Numeric(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, FriError>;
