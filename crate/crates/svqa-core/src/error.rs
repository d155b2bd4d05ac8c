use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{op}: bad argument: {msg}")]
    BadArgument { op: &'static str, msg: String },

    #[error("token id {id} out of range for vocabulary of {vocab} entries")]
    VocabIndex { id: usize, vocab: usize },

    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),

    #[error("loss does not depend on any tracked parameter")]
    DetachedLoss,

    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGrad(String),

    #[error("non-finite loss at batch {0}")]
    NonFiniteLoss(usize),

    #[error("gradient check failed for {op}: max relative error {err:.3e}")]
    GradCheckFailed { op: String, err: f32 },

    #[error("{axis} extent {len} is not divisible by cube size {cube}")]
    Divisibility {
        axis: &'static str,
        len: usize,
        cube: usize,
    },

    #[error("clip window [{start}, {end}) exceeds video length {len}")]
    ClipOutOfRange { start: usize, end: usize, len: usize },

    #[error("config: {0}")]
    Config(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("{path}: {source}")]
    IoAt {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("image: {0}")]
    Image(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 2 for configuration problems, 3 for
    /// numeric failures, 4 for I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonFiniteGrad(_)
            | Error::NonFiniteLoss(_)
            | Error::GradCheckFailed { .. } => 3,
            Error::Io(_) | Error::IoAt { .. } | Error::Image(_) | Error::Json(_) => 4,
            Error::Checkpoint(_) | Error::Dataset(_) => 4,
            _ => 2,
        }
    }

    pub fn io_at(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::IoAt {
            path: path.into(),
            source,
        }
    }
}
