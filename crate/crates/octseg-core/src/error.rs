use std::path::PathBuf;

use thiserror::Error;

/// Crate-wide error type. Variants are kept fine-grained so callers (and
/// tests) can tell apart a missing file, a malformed header, an image the
/// pipeline cannot work on, and a search that found no admissible path.
#[derive(Debug, Error)]
pub enum Error {
    #[error("failed to access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed image data: {reason}")]
    MalformedImage { path: PathBuf, reason: String },

    #[error("{path}: unsupported image format: {reason}")]
    UnsupportedImage { path: PathBuf, reason: String },

    #[error("image has zero rows or zero columns")]
    EmptyImage,

    #[error("pixel buffer holds {got} samples but {rows} rows x {cols} cols were declared")]
    PixelCountMismatch { rows: usize, cols: usize, got: usize },

    #[error("intensity {value} at (row {row}, col {col}) is outside [0, 1]")]
    IntensityOutOfRange { row: usize, col: usize, value: f64 },

    #[error("image is {rows}x{cols}; the pipeline needs at least {min_rows}x{min_cols}")]
    ImageTooSmall {
        rows: usize,
        cols: usize,
        min_rows: usize,
        min_cols: usize,
    },

    #[error("window of {window} samples exceeds the {available} available")]
    WindowTooLarge { window: usize, available: usize },

    #[error("boundary spans no columns")]
    EmptyBoundary,

    #[error("boundary row {row} at column {col} is outside an image with {rows} rows")]
    BoundaryOutOfBounds { col: usize, row: usize, rows: usize },

    #[error("inputs span {left} and {right} columns; they must match")]
    ColumnCountMismatch { left: usize, right: usize },

    #[error("ROI is disconnected: {reason}")]
    DisconnectedRoi { reason: String },

    #[error("phase 1 left no bright region to take an edge from")]
    Phase1Empty,

    #[error("boundary ordering violated at column {col}: upper row {upper} is below lower row {lower}")]
    OrderingViolation { col: usize, upper: usize, lower: usize },

    #[error("no column has room below the ILM to sample intensity from")]
    NoRoomBelowIlm,

    #[error("phantom curves out of order at column {col}: {detail}")]
    CurveOrdering { col: usize, detail: String },

    #[error("{path}: malformed boundary table: {reason}")]
    MalformedTable { path: PathBuf, reason: String },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;
