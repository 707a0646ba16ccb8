use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Incompatible tensor shapes for an operation; names the op and both shapes.
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    /// Shape/data invariants violated when constructing or consuming a tensor.
    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    /// A configuration field is out of its documented range.
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Malformed input data (labels, dataset files, CSV rows).
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Training diverged (non-finite loss); carries the last epoch that completed.
    #[error("training diverged at epoch {epoch}: {detail}")]
    Diverged { epoch: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
