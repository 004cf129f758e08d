use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the estimation library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid raster: {0}")]
    InvalidRaster(String),

    #[error("non-finite value at pixel ({row}, {col})")]
    NonFinite { row: usize, col: usize },

    #[error("dimension mismatch: expected {expected_h}x{expected_w}, got {got_h}x{got_w}")]
    DimensionMismatch {
        expected_h: usize,
        expected_w: usize,
        got_h: usize,
        got_w: usize,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "image {height}x{width} too small for search half-width {search_half} and patch half-width {patch_half} (needs min side > {min_side})"
    )]
    ImageTooSmall {
        height: usize,
        width: usize,
        search_half: usize,
        patch_half: usize,
        min_side: usize,
    },

    #[error("calibration geometry (search {calib_search}, patch {calib_patch}) does not match configuration (search {cfg_search}, patch {cfg_patch})")]
    CalibrationMismatch {
        calib_search: usize,
        calib_patch: usize,
        cfg_search: usize,
        cfg_patch: usize,
    },

    #[error("guided estimation requested but no guide image supplied")]
    MissingGuide,

    #[error("non-finite dissimilarity encountered at center ({row}, {col})")]
    NonFiniteDissimilarity { row: usize, col: usize },

    #[error("matrix is not positive definite (eigenvalue {eigenvalue:e})")]
    NotPositiveDefinite { eigenvalue: f64 },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error(
        "unknown scene '{0}' (expected one of homogeneous, edge2, checkerboard, point_target, canopy_mosaic)"
    )]
    UnknownScene(String),

    #[error("unknown class {class} at pixel index {index}")]
    UnknownClass { class: u16, index: usize },

    #[error("cross-validation: {0}")]
    CrossValidation(String),

    #[error("bad magic in {path}: expected \"PGNLM1\", found \"{}\"", found.escape_ascii())]
    BadMagic { path: PathBuf, found: Vec<u8> },

    #[error("unsupported container kind {kind} in {path}")]
    BadKind { path: PathBuf, kind: u8 },

    #[error("truncated container {path}: expected {expected} bytes, found {actual}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("container {path} has {extra} trailing bytes after the payload")]
    TrailingBytes { path: PathBuf, extra: u64 },

    #[error("container {path} holds a NaN or infinite value at element {index}")]
    NonFinitePayload { path: PathBuf, index: usize },

    #[error("container {path}: {reason}")]
    BadHeader { path: PathBuf, reason: String },

    #[error("expected a {expected} container, found {found}")]
    WrongKind {
        expected: &'static str,
        found: &'static str,
    },

    #[error("parse error in {path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("i/o error on {path}: {source}")]
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

    /// Short, stable, machine-readable category used by the command-line tool.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::BadMagic { .. }
            | Error::BadKind { .. }
            | Error::Truncated { .. }
            | Error::TrailingBytes { .. }
            | Error::NonFinitePayload { .. }
            | Error::BadHeader { .. }
            | Error::WrongKind { .. }
            | Error::Parse { .. } => "format",
            Error::DimensionMismatch { .. }
            | Error::ImageTooSmall { .. }
            | Error::CalibrationMismatch { .. } => "geometry",
            Error::MissingGuide => "usage",
            Error::InvalidConfig(_) | Error::UnknownScene(_) | Error::InvalidScene(_) => "config",
            Error::InvalidRaster(_)
            | Error::NonFinite { .. }
            | Error::NonFiniteDissimilarity { .. }
            | Error::NotPositiveDefinite { .. }
            | Error::UnknownClass { .. } => "data",
            Error::CrossValidation(_) => "classify",
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
