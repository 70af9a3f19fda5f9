use thiserror::Error;

/// Errors raised by the ocugaze library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("cascade parse error at {path}: {message}")]
    CascadeParse { path: String, message: String },

    #[error("unsupported cascade at {path}: {reason}")]
    UnsupportedCascade { path: String, reason: String },

    #[error("eye region extraction failed: {0}")]
    Extraction(String),

    #[error("iris localization failed: {0}")]
    Localization(String),

    #[error("eyelid landmark detection failed: {0}")]
    Landmark(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("model file error: {0}")]
    ModelFile(String),

    #[error("training diverged at epoch {epoch}: loss = {loss}")]
    Diverged { epoch: usize, loss: f64 },

    #[error("dataset parse error at row {row}: {message}")]
    DatasetParse { row: usize, message: String },

    #[error("split error: insufficient support for classes {classes:?} (need at least {required})")]
    Split { classes: Vec<u8>, required: usize },

    #[error("raster format error: {0}")]
    Raster(String),

    #[error("frame source unavailable: {0}")]
    DeviceUnavailable(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
