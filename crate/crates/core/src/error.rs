use std::path::PathBuf;

use thiserror::Error;

/// Every failure surfaced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("point depth {0} is not positive")]
    NonPositiveDepth(f64),
    #[error("quaternion norm {0} is not unit")]
    NonUnitQuaternion(f64),
    #[error("invalid camera parameters: {0}")]
    InvalidCamera(String),
    #[error("viewport degenerates below one pixel ({width} x {height})")]
    EmptyViewport { width: f64, height: f64 },
    #[error("{channels} channels cannot be split into {depth_bins} depth bins")]
    IndivisibleChannels { channels: usize, depth_bins: usize },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mask has no positive pixels")]
    EmptyMask,
    #[error("no valid depth inside the mask")]
    NoValidDepth,
    #[error("no views supplied")]
    NoViews,
    #[error("object is behind the camera (near plane at {near} m)")]
    ObjectBehindCamera { near: f64 },
    #[error("no pixel is both masked and has valid depth")]
    NoValidPixels,
    #[error("all elite candidates have non-finite loss")]
    DegenerateElites,
    #[error("non-finite gradient at iteration {iteration}")]
    NonFiniteGradient { iteration: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("manifest error in {entry}: {message}")]
    Manifest { entry: String, message: String },
    #[error("missing file for {entry}: {path}")]
    MissingFile { entry: String, path: PathBuf },
    #[error("extrinsics of {entry} are not rigid: {message}")]
    NonRigidExtrinsics { entry: String, message: String },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("image codec error on {path}: {message}")]
    Image { path: PathBuf, message: String },
    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the numerics rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFiniteGradient { .. }
                | Error::DegenerateElites
                | Error::ObjectBehindCamera { .. }
                | Error::NonPositiveDepth(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
