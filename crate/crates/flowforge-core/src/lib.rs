//! Synthetic optical-flow training data from single frames.
//!
//! Given one RGB frame and a metric depth map, this crate simulates a rigid
//! camera move, produces the dense flow field induced by scene geometry, and
//! renders the corresponding second frame — a complete (frame, flow, frame')
//! triplet with per-pixel validity. It also ships the evaluation metrics
//! (endpoint error, outlier rate, PSNR, SSIM) and the flow file formats
//! needed to consume or inspect the results.

pub mod camera;
pub mod error;
pub mod filtering;
pub mod io;
pub mod metrics;
pub mod raster;
pub mod render;
pub mod rng;
pub mod synthesis;
pub mod warp;

pub use error::{Error, Result};
pub use raster::{
    bilinear_sample, center_crop_resize, center_crop_resize_depth, center_crop_resize_flow,
    DepthMap, FeatureMap, FlowField, FlowIndexing, Image, Raster, ValidityMask,
    DEFAULT_MAX_DEPTH_METERS,
};
