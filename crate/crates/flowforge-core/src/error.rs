//! Error type shared by every module of the crate.

use crate::raster::FlowIndexing;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong across raster handling, geometry,
/// synthesis, metrics and file I/O.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("raster has zero width or height")]
    EmptyRaster,

    #[error("dimension mismatch: expected {expected_width}x{expected_height}, got {actual_width}x{actual_height}")]
    DimensionMismatch {
        expected_width: usize,
        expected_height: usize,
        actual_width: usize,
        actual_height: usize,
    },

    #[error("channel mismatch: expected {expected}, got {actual}")]
    ChannelMismatch { expected: usize, actual: usize },

    #[error("unsupported channel count {channels} (expected 1 or 3)")]
    InvalidChannelCount { channels: usize },

    #[error("data length mismatch: expected {expected} values, got {actual}")]
    DataLengthMismatch { expected: usize, actual: usize },

    #[error("{what} contains a non-finite value")]
    NonFinite { what: &'static str },

    #[error("dimension too small for this operation: {width}x{height} (need at least {min})")]
    DegenerateDimension {
        width: usize,
        height: usize,
        min: usize,
    },

    #[error("parameter {name} = {value} outside valid range {range}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("vertical field of view {fovy_deg} degrees outside (0, 180)")]
    InvalidFieldOfView { fovy_deg: f64 },

    #[error("depth {depth} is not strictly positive")]
    NonPositiveDepth { depth: f64 },

    #[error("rotation block is not a proper rotation (det = {det})")]
    InvalidRotation { det: f64 },

    #[error("motion axis must have nonzero length")]
    InvalidAxis,

    #[error("flow indexing mismatch: expected {expected:?}, got {actual:?}")]
    IndexingMismatch {
        expected: FlowIndexing,
        actual: FlowIndexing,
    },

    #[error("correspondence grid must be in pixel coordinate space")]
    CorrespondenceNotPixelSpace,

    #[error("fusion weight {value} outside [0, 1]")]
    WeightOutOfRange { value: f64 },

    #[error("metric undefined: no valid pixels to evaluate")]
    EmptyValidSet,

    #[error("image {width}x{height} smaller than the {window}x{window} evaluation window")]
    ImageTooSmallForWindow {
        width: usize,
        height: usize,
        window: usize,
    },

    #[error("no valid pixels available to fill from")]
    NoValidPixels,

    #[error("{format}: bad magic bytes {found:02x?}")]
    BadMagic { format: &'static str, found: Vec<u8> },

    #[error("{format}: truncated, expected {expected} bytes, got {actual}")]
    Truncated {
        format: &'static str,
        expected: u64,
        actual: u64,
    },

    #[error("{format}: implausible dimensions {width}x{height}")]
    BadDimensions {
        format: &'static str,
        width: i64,
        height: i64,
    },

    #[error("{format}: malformed header: {detail}")]
    BadHeader { format: &'static str, detail: String },

    #[error("{format}: unsupported pixel format: {detail}")]
    UnsupportedPixelFormat { format: &'static str, detail: String },

    #[error("flow magnitude {max_abs} exceeds format limit {limit}")]
    FlowMagnitudeOverflow { max_abs: f64, limit: f64 },

    #[error("triplet member missing: {name}")]
    MissingTripletMember { name: String },

    #[error("metadata: {detail}")]
    MetaParse { detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    PngCodec(#[from] image::ImageError),
}
