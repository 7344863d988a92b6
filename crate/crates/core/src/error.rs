use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("IDX magic mismatch: expected {expected:#010x}, found {found:#010x}")]
    MagicMismatch { expected: u32, found: u32 },
    #[error("IDX file truncated: header declares {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("label {label} at index {index} is outside 0..=9")]
    LabelOutOfRange { index: usize, label: u8 },
    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },
    #[error("subset of {requested} samples requested from a dataset of {available}")]
    SubsetTooLarge { requested: usize, available: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("checkpoint corrupt: {0}")]
    CheckpointCorrupt(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
