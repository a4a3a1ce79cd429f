use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("zero-norm label at sample {0}")]
    ZeroLabel(usize),
    #[error("training diverged (non-finite loss) in epoch {epoch}")]
    Divergence { epoch: usize },
    #[error("malformed checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Core(#[from] risce_core::Error),
}

pub type Result<T> = std::result::Result<T, NnError>;

pub(crate) fn mismatch(op: &'static str, left: &[usize], right: &[usize]) -> NnError {
    NnError::ShapeMismatch {
        op,
        left: left.to_vec(),
        right: right.to_vec(),
    }
}
