use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot decode {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("cannot encode {path}: {source}")]
    Encode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error("unsupported pixel format in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    /// The raster is smaller than an operation requires, or its buffers
    /// disagree with its declared size.
    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("frames belong to different clips: {0:?} vs {1:?}")]
    ClipMismatch(String, String),

    #[error("frame has no color plane")]
    MissingColor,

    #[error("no frame index digits in file name {0}")]
    FrameIndex(PathBuf),

    #[error("empty input set")]
    EmptySet,

    #[error("cannot sample {requested} training frames from a clip of {available} frames")]
    Count { requested: usize, available: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid scene: {0}")]
    Spec(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
