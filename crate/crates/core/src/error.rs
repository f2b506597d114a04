use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the calibration toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("schema error: {0}")]
    Schema(String),
    #[error("format error: {0}")]
    Format(String),
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("distortion inversion did not converge for pixel ({u}, {v})")]
    NoConvergence { u: f64, v: f64 },
    #[error("degenerate sample: {0}")]
    DegenerateSample(String),
    #[error("insufficient correspondences: {have} available, {need} required")]
    InsufficientCorrespondences { have: usize, need: usize },
    #[error("insufficient overlap: {valid} valid residuals (need {need})")]
    InsufficientOverlap { valid: usize, need: usize },
    #[error("scan {index}: {source}")]
    Scan {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("no overlap between projected points and image")]
    NoOverlap,
    #[error("calibration failed: {0}")]
    CalibrationFailed(String),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
