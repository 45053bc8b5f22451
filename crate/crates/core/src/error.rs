use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("missing data: {0}")]
    MissingData(String),
    #[error("class mismatch: found {found} class directories, expected {expected}")]
    ClassMismatch { found: usize, expected: usize },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("image {height}x{width} is too small for a {crop}px crop")]
    ImageTooSmall { height: usize, width: usize, crop: usize },
    #[error("unknown architecture `{0}`")]
    UnknownArchitecture(String),
    #[error("incompatible architecture: {0}")]
    ArchIncompatible(String),
    #[error("empty dataset: {0}")]
    EmptyDataset(String),
    #[error("non-finite loss at epoch {epoch}, step {step}: {detail}")]
    NonFiniteLoss { epoch: usize, step: usize, detail: String },
    #[error("provider failure: {0}")]
    ProviderFailure(String),
    #[error("empty corpus: {0}")]
    EmptyCorpus(String),
    #[error("unknown layer `{0}`")]
    UnknownLayer(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("empty sweep: no records to select from")]
    EmptySweep,
    #[error("checkpoint format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec error at {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Format { path: path.into(), detail: detail.into() }
    }
}
