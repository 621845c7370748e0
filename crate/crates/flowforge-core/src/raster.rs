//! Raster containers shared by the whole pipeline: images, depth maps,
//! flow fields, validity masks and generic feature maps, plus the bilinear
//! sampling and center-crop-resize primitives they all build on.
//!
//! Conventions used everywhere in this crate:
//! - `x` is the column (u), `y` is the row (v); storage is row-major.
//! - The linear pixel index is `y * width + x`; tie-breaks are defined on it.
//! - Image intensities live on the real-valued `[0, 255]` scale so the
//!   photometric filtering thresholds apply without rescaling.

use crate::error::{Error, Result};

/// Default metric depth cap in meters applied when ingesting depth maps.
pub const DEFAULT_MAX_DEPTH_METERS: f64 = 80.0;

/// Whether a flow vector is stored at its source-frame pixel or at the
/// destination pixel in the target frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FlowIndexing {
    /// Displacement stored at the pixel's location in the first frame.
    SourceIndexed,
    /// Displacement stored at the pixel's destination in the second frame.
    TargetIndexed,
}

impl FlowIndexing {
    /// Serialized tag used in metadata files ("source" / "target").
    pub fn tag(self) -> &'static str {
        match self {
            FlowIndexing::SourceIndexed => "source",
            FlowIndexing::TargetIndexed => "target",
        }
    }

    /// Parse a metadata tag back into an indexing convention.
    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "source" => Ok(FlowIndexing::SourceIndexed),
            "target" => Ok(FlowIndexing::TargetIndexed),
            other => Err(Error::MetaParse {
                detail: format!("unknown indexing tag {other:?}"),
            }),
        }
    }
}

/// Common read access for rasters that can be bilinearly sampled.
pub trait Raster {
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn channels(&self) -> usize;
    /// Value at integer pixel `(x, y)` and channel `c`. Panics out of range.
    fn value(&self, x: usize, y: usize, c: usize) -> f64;
}

fn check_nonempty(width: usize, height: usize) -> Result<()> {
    if width == 0 || height == 0 {
        return Err(Error::EmptyRaster);
    }
    Ok(())
}

fn check_finite(data: &[f64], what: &'static str) -> Result<()> {
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { what });
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Image
// ---------------------------------------------------------------------------

/// H×W×C raster of intensities on the real-valued `[0, 255]` scale.
/// Channels is 1 (gray) or 3 (RGB). Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_nonempty(width, height)?;
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidChannelCount { channels });
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(Error::DataLengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        check_finite(&data, "image data")?;
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Image filled with a single value.
    pub fn constant(width: usize, height: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Build per pixel/channel from a closure `(x, y, c) -> value`.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height && c < self.channels);
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// All channels of one pixel as a contiguous slice.
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let base = (y * self.width + x) * self.channels;
        &self.data[base..base + self.channels]
    }

    /// View this image as a generic feature map (same storage layout).
    pub fn to_feature_map(&self) -> FeatureMap {
        FeatureMap {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.clone(),
        }
    }
}

impl Raster for Image {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn channels(&self) -> usize {
        self.channels
    }
    fn value(&self, x: usize, y: usize, c: usize) -> f64 {
        self.at(x, y, c)
    }
}

// ---------------------------------------------------------------------------
// DepthMap
// ---------------------------------------------------------------------------

/// H×W metric depth in meters. Values above `max_depth` are clamped on
/// ingest; zero, negative or non-finite values are marked invalid and are
/// excluded from projection (zero depth is a sensor-hole sentinel in common
/// depth formats).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    max_depth: f64,
    data: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Ingest raw depth values, clamping to `max_depth` and invalidating
    /// non-positive or non-finite entries.
    pub fn from_values(
        width: usize,
        height: usize,
        values: Vec<f64>,
        max_depth: f64,
    ) -> Result<Self> {
        check_nonempty(width, height)?;
        if !(max_depth.is_finite() && max_depth > 0.0) {
            return Err(Error::InvalidParameter {
                name: "max_depth",
                value: max_depth,
                range: "(0, inf)",
            });
        }
        let expected = width * height;
        if values.len() != expected {
            return Err(Error::DataLengthMismatch {
                expected,
                actual: values.len(),
            });
        }
        let mut data = Vec::with_capacity(expected);
        let mut valid = Vec::with_capacity(expected);
        for v in values {
            if v.is_finite() && v > 0.0 {
                data.push(v.min(max_depth));
                valid.push(true);
            } else {
                data.push(0.0);
                valid.push(false);
            }
        }
        Ok(Self {
            width,
            height,
            max_depth,
            data,
            valid,
        })
    }

    /// Fronto-parallel constant-depth plane.
    pub fn constant(width: usize, height: usize, depth: f64, max_depth: f64) -> Result<Self> {
        Self::from_values(width, height, vec![depth; width * height], max_depth)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn max_depth(&self) -> f64 {
        self.max_depth
    }

    /// Depth at a pixel, or `None` when the pixel holds no valid measurement.
    pub fn depth_at(&self, x: usize, y: usize) -> Option<f64> {
        let i = y * self.width + x;
        self.valid[i].then(|| self.data[i])
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }
}

// ---------------------------------------------------------------------------
// FlowField
// ---------------------------------------------------------------------------

/// H×W×2 per-pixel displacement in pixels with an indexing convention tag.
/// Pixels without a defined flow store `(0, 0)`; their validity lives in a
/// companion [`ValidityMask`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    indexing: FlowIndexing,
    data: Vec<f64>,
}

impl FlowField {
    pub fn new(
        width: usize,
        height: usize,
        indexing: FlowIndexing,
        data: Vec<f64>,
    ) -> Result<Self> {
        check_nonempty(width, height)?;
        let expected = 2 * width * height;
        if data.len() != expected {
            return Err(Error::DataLengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        check_finite(&data, "flow data")?;
        Ok(Self {
            width,
            height,
            indexing,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize, indexing: FlowIndexing) -> Result<Self> {
        Self::new(width, height, indexing, vec![0.0; 2 * width * height])
    }

    /// Uniform displacement everywhere.
    pub fn constant(
        width: usize,
        height: usize,
        indexing: FlowIndexing,
        u: f64,
        v: f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(2 * width * height);
        for _ in 0..width * height {
            data.push(u);
            data.push(v);
        }
        Self::new(width, height, indexing, data)
    }

    /// Build per pixel from a closure `(x, y) -> (u, v)`.
    pub fn from_fn(
        width: usize,
        height: usize,
        indexing: FlowIndexing,
        mut f: impl FnMut(usize, usize) -> (f64, f64),
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(2 * width * height);
        for y in 0..height {
            for x in 0..width {
                let (u, v) = f(x, y);
                data.push(u);
                data.push(v);
            }
        }
        Self::new(width, height, indexing, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn indexing(&self) -> FlowIndexing {
        self.indexing
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn uv(&self, x: usize, y: usize) -> (f64, f64) {
        let i = 2 * (y * self.width + x);
        (self.data[i], self.data[i + 1])
    }

    /// Overwrites the vector at `(x, y)`. Panics on non-finite components;
    /// fields are finite by construction and stay that way.
    pub fn set(&mut self, x: usize, y: usize, u: f64, v: f64) {
        assert!(
            u.is_finite() && v.is_finite(),
            "flow components must be finite"
        );
        let i = 2 * (y * self.width + x);
        self.data[i] = u;
        self.data[i + 1] = v;
    }

    /// Same data under the other indexing tag. This only relabels the field;
    /// use `synthesis::reindex_flow` to actually re-grid it.
    pub fn with_indexing(&self, indexing: FlowIndexing) -> Self {
        Self {
            indexing,
            ..self.clone()
        }
    }
}

// ---------------------------------------------------------------------------
// ValidityMask
// ---------------------------------------------------------------------------

/// Row-major boolean mask annotating a raster of the same dimensions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ValidityMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl ValidityMask {
    pub fn new(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        check_nonempty(width, height)?;
        let expected = width * height;
        if data.len() != expected {
            return Err(Error::DataLengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn full(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![true; width * height])
    }

    pub fn empty(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![false; width * height])
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, valid: bool) {
        self.data[y * self.width + x] = valid;
    }

    pub fn count_valid(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    /// Fraction of valid pixels in [0, 1].
    pub fn valid_fraction(&self) -> f64 {
        self.count_valid() as f64 / (self.width * self.height) as f64
    }

    /// Pixelwise AND with another mask of the same dimensions.
    pub fn and(&self, other: &ValidityMask) -> Result<ValidityMask> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::DimensionMismatch {
                expected_width: self.width,
                expected_height: self.height,
                actual_width: other.width,
                actual_height: other.height,
            });
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| *a && *b)
            .collect();
        ValidityMask::new(self.width, self.height, data)
    }
}

// ---------------------------------------------------------------------------
// FeatureMap
// ---------------------------------------------------------------------------

/// H×W×C raster of real-valued features with arbitrary channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl FeatureMap {
    pub fn new(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        check_nonempty(width, height)?;
        if channels == 0 {
            return Err(Error::InvalidChannelCount { channels });
        }
        let expected = width * height * channels;
        if data.len() != expected {
            return Err(Error::DataLengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        check_finite(&data, "feature data")?;
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self::new(width, height, channels, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn at(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// All channels of one pixel as a contiguous slice.
    pub fn features(&self, x: usize, y: usize) -> &[f64] {
        let base = (y * self.width + x) * self.channels;
        &self.data[base..base + self.channels]
    }
}

impl Raster for FeatureMap {
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn channels(&self) -> usize {
        self.channels
    }
    fn value(&self, x: usize, y: usize, c: usize) -> f64 {
        self.at(x, y, c)
    }
}

// ---------------------------------------------------------------------------
// Bilinear sampling
// ---------------------------------------------------------------------------

/// Bilinear blend of the four neighbors at real-valued `(x, y)`, one value
/// per channel. Returns `in_bounds = false` (and zeros) when `(x, y)` lies
/// outside `[0, W-1] x [0, H-1]`; out-of-bounds is signaled, not an error.
/// At exact integer coordinates the stored pixel value is returned bit-exact.
pub fn bilinear_sample<R: Raster>(raster: &R, x: f64, y: f64) -> (Vec<f64>, bool) {
    let mut out = vec![0.0; raster.channels()];
    let in_bounds = bilinear_sample_into(raster, x, y, &mut out);
    (out, in_bounds)
}

/// Allocation-free variant of [`bilinear_sample`]; `out` must hold one slot
/// per channel. Fills zeros and returns `false` when out of bounds.
pub fn bilinear_sample_into<R: Raster>(raster: &R, x: f64, y: f64, out: &mut [f64]) -> bool {
    debug_assert_eq!(out.len(), raster.channels());
    let w = raster.width();
    let h = raster.height();
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    if !(x.is_finite() && y.is_finite()) || x < 0.0 || y < 0.0 || x > max_x || y > max_y {
        out.fill(0.0);
        return false;
    }
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(w - 1);
    let y1 = (y0 + 1).min(h - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    for (c, slot) in out.iter_mut().enumerate() {
        let v00 = raster.value(x0, y0, c);
        let v10 = raster.value(x1, y0, c);
        let v01 = raster.value(x0, y1, c);
        let v11 = raster.value(x1, y1, c);
        *slot = v00 * (1.0 - fx) * (1.0 - fy)
            + v10 * fx * (1.0 - fy)
            + v01 * (1.0 - fx) * fy
            + v11 * fx * fy;
    }
    true
}

// ---------------------------------------------------------------------------
// Center crop + resize
// ---------------------------------------------------------------------------

/// Crop geometry shared by the image/depth/flow resize variants: a centered
/// square of the shorter side, then a bilinear resize to `target`.
struct CropPlan {
    offset_x: usize,
    offset_y: usize,
    side: usize,
    target: usize,
}

impl CropPlan {
    fn new(width: usize, height: usize, target: usize) -> Result<Self> {
        check_nonempty(width, height)?;
        if target == 0 {
            return Err(Error::InvalidParameter {
                name: "target",
                value: 0.0,
                range: "[1, inf)",
            });
        }
        let side = width.min(height);
        Ok(Self {
            offset_x: (width - side) / 2,
            offset_y: (height - side) / 2,
            side,
            target,
        })
    }

    /// Source coordinate (within the crop) for an output coordinate,
    /// align-corners convention.
    fn src_coord(&self, dst: usize) -> f64 {
        if self.target == 1 {
            (self.side - 1) as f64 / 2.0
        } else {
            dst as f64 * (self.side - 1) as f64 / (self.target - 1) as f64
        }
    }

    fn is_identity(&self) -> bool {
        self.side == self.target
    }

    /// Per-axis value scale for displacement fields (target / cropped side).
    fn scale(&self) -> f64 {
        self.target as f64 / self.side as f64
    }
}

/// Center-crop an image to its shorter side and bilinearly resize the crop
/// to `target`×`target`. When the crop already matches `target`, pixels are
/// copied without resampling.
pub fn center_crop_resize(image: &Image, target: usize) -> Result<Image> {
    let plan = CropPlan::new(image.width(), image.height(), target)?;
    if plan.is_identity() {
        return Image::from_fn(target, target, image.channels(), |x, y, c| {
            image.at(x + plan.offset_x, y + plan.offset_y, c)
        });
    }
    let channels = image.channels();
    let mut scratch = vec![0.0; channels];
    Image::from_fn(target, target, channels, |x, y, c| {
        if c == 0 {
            let sx = plan.offset_x as f64 + plan.src_coord(x);
            let sy = plan.offset_y as f64 + plan.src_coord(y);
            bilinear_sample_into(image, sx, sy, &mut scratch);
        }
        scratch[c]
    })
}

/// Depth variant of [`center_crop_resize`]. Interpolation is bilinear over
/// valid samples only: invalid neighbors contribute zero weight and the
/// result is renormalized; a pixel whose four neighbors are all invalid
/// stays invalid. Reduces to plain bilinear when every sample is valid.
pub fn center_crop_resize_depth(depth: &DepthMap, target: usize) -> Result<DepthMap> {
    let plan = CropPlan::new(depth.width(), depth.height(), target)?;
    let mut values = Vec::with_capacity(target * target);
    for y in 0..target {
        for x in 0..target {
            let sx = plan.offset_x as f64 + plan.src_coord(x);
            let sy = plan.offset_y as f64 + plan.src_coord(y);
            let x0 = sx.floor() as usize;
            let y0 = sy.floor() as usize;
            let x1 = (x0 + 1).min(depth.width() - 1);
            let y1 = (y0 + 1).min(depth.height() - 1);
            let fx = sx - x0 as f64;
            let fy = sy - y0 as f64;
            let taps = [
                (x0, y0, (1.0 - fx) * (1.0 - fy)),
                (x1, y0, fx * (1.0 - fy)),
                (x0, y1, (1.0 - fx) * fy),
                (x1, y1, fx * fy),
            ];
            let mut acc = 0.0;
            let mut weight = 0.0;
            for (tx, ty, tw) in taps {
                if let Some(d) = depth.depth_at(tx, ty) {
                    acc += tw * d;
                    weight += tw;
                }
            }
            values.push(if weight > 0.0 { acc / weight } else { 0.0 });
        }
    }
    DepthMap::from_values(target, target, values, depth.max_depth())
}

/// Flow variant of [`center_crop_resize`]: bilinear on the (u, v) components
/// with u and v rescaled by the horizontal and vertical scale factors. The
/// crop is square, so both factors equal `target / shorter_side`.
pub fn center_crop_resize_flow(flow: &FlowField, target: usize) -> Result<FlowField> {
    let plan = CropPlan::new(flow.width(), flow.height(), target)?;
    let scale = plan.scale();
    if plan.is_identity() {
        return FlowField::from_fn(target, target, flow.indexing(), |x, y| {
            flow.uv(x + plan.offset_x, y + plan.offset_y)
        });
    }
    // Sample the components as a 2-channel raster, then rescale.
    let as_features = FeatureMap::new(
        flow.width(),
        flow.height(),
        2,
        flow.data().to_vec(),
    )?;
    let mut uv = [0.0; 2];
    FlowField::from_fn(target, target, flow.indexing(), |x, y| {
        let sx = plan.offset_x as f64 + plan.src_coord(x);
        let sy = plan.offset_y as f64 + plan.src_coord(y);
        bilinear_sample_into(&as_features, sx, sy, &mut uv);
        (uv[0] * scale, uv[1] * scale)
    })
}
