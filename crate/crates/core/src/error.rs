use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Every task gradient is zero: the point is Pareto-stationary and
    /// training loops are expected to stop.
    #[error("ZeroGradient: all task gradients vanish (Pareto-stationary point)")]
    ZeroGradient,

    #[error("gradient of task {task} is zero")]
    ZeroColumn { task: usize },

    #[error("matrix must have at least one row and one column")]
    EmptyMatrix,

    #[error("matrix contains non-finite entries")]
    NonFinite,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is {rows}x{cols}, expected square")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix is not symmetric (relative asymmetry {relative_asymmetry:e})")]
    NotSymmetric { relative_asymmetry: f64 },

    #[error("invalid task weights: {0}")]
    InvalidWeights(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown method `{0}`")]
    UnknownMethod(String),

    #[error("loss of task {task} diverged to {loss:e} at step {step}")]
    Diverged { step: usize, task: usize, loss: f64 },

    #[error("zero single-task baseline for task `{task}`, metric `{metric}`")]
    ZeroBaseline { task: String, metric: String },

    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
