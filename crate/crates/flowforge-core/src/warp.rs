//! Backward warping and coordinate embeddings.
//!
//! A target-indexed flow field stores, at each output pixel `p`, the
//! displacement back to its source content, so every warp here samples the
//! source raster at `p − flow(p)`. Getting that sign wrong is the classic
//! failure mode of warp code; the convention is fixed crate-wide and
//! enforced by the flow field's indexing tag.

use crate::error::{Error, Result};
use crate::raster::{
    bilinear_sample_into, FeatureMap, FlowField, FlowIndexing, Image, Raster, ValidityMask,
};

/// The align-corners identity grid: per pixel, its own normalized
/// coordinate `(2u/(W−1)−1, 2v/(H−1)−1) ∈ [−1, 1]²`. Only constructible as
/// the identity grid; warped versions live in plain [`FeatureMap`]s.
#[derive(Debug, Clone, PartialEq)]
pub struct CoordinateGrid {
    features: FeatureMap,
}

/// Sinusoidal multi-frequency encoding of a coordinate grid; channel count
/// is `2 coords · 2 functions · L frequencies`.
pub type CoordinateEmbedding = FeatureMap;

impl CoordinateGrid {
    pub fn width(&self) -> usize {
        self.features.width()
    }

    pub fn height(&self) -> usize {
        self.features.height()
    }

    /// Normalized coordinate at pixel `(x, y)`.
    pub fn coord(&self, x: usize, y: usize) -> (f64, f64) {
        (self.features.at(x, y, 0), self.features.at(x, y, 1))
    }

    /// The underlying 2-channel raster (channel 0 = x, channel 1 = y).
    pub fn as_features(&self) -> &FeatureMap {
        &self.features
    }
}

/// Build the canonical align-corners coordinate grid for a `width`×`height`
/// raster. Both dimensions must be at least 2 for the normalization to be
/// well-defined.
pub fn canonical_grid(width: usize, height: usize) -> Result<CoordinateGrid> {
    if width < 2 || height < 2 {
        return Err(Error::DegenerateDimension {
            width,
            height,
            min: 2,
        });
    }
    let sx = 2.0 / (width - 1) as f64;
    let sy = 2.0 / (height - 1) as f64;
    let features = FeatureMap::from_fn(width, height, 2, |x, y, c| {
        if c == 0 {
            x as f64 * sx - 1.0
        } else {
            y as f64 * sy - 1.0
        }
    })?;
    Ok(CoordinateGrid { features })
}

/// Number of embedding channels for `frequencies` frequency bands.
pub fn embedding_channels(frequencies: usize) -> usize {
    2 * 2 * frequencies
}

/// Fill `out` with the Fourier features of one normalized coordinate:
/// sines of `2ᵏπ·c` for c ∈ {x, y} and k < L, then the matching cosines.
fn embed_coord(x: f64, y: f64, frequencies: usize, out: &mut [f64]) {
    debug_assert_eq!(out.len(), embedding_channels(frequencies));
    let half = 2 * frequencies;
    for (ci, c) in [x, y].into_iter().enumerate() {
        for k in 0..frequencies {
            let angle = (1u64 << k) as f64 * std::f64::consts::PI * c;
            let (s, co) = angle.sin_cos();
            out[ci * frequencies + k] = s;
            out[half + ci * frequencies + k] = co;
        }
    }
}

/// Encode a coordinate grid as Fourier features with powers-of-two
/// frequencies `2ᵏπ`, k < `frequencies`. Channel order: all sines grouped
/// by (coordinate, frequency), then all cosines in the same order.
pub fn fourier_embed(grid: &CoordinateGrid, frequencies: usize) -> Result<CoordinateEmbedding> {
    if frequencies == 0 {
        return Err(Error::InvalidParameter {
            name: "frequencies",
            value: 0.0,
            range: "[1, inf)",
        });
    }
    let channels = embedding_channels(frequencies);
    let mut row = vec![0.0; channels];
    FeatureMap::from_fn(grid.width(), grid.height(), channels, |x, y, c| {
        if c == 0 {
            let (cx, cy) = grid.coord(x, y);
            embed_coord(cx, cy, frequencies, &mut row);
        }
        row[c]
    })
}

fn require_target_indexed(flow: &FlowField) -> Result<()> {
    if flow.indexing() != FlowIndexing::TargetIndexed {
        return Err(Error::IndexingMismatch {
            expected: FlowIndexing::TargetIndexed,
            actual: flow.indexing(),
        });
    }
    Ok(())
}

fn require_same_dims<R: Raster>(raster: &R, flow: &FlowField) -> Result<()> {
    if raster.width() != flow.width() || raster.height() != flow.height() {
        return Err(Error::DimensionMismatch {
            expected_width: raster.width(),
            expected_height: raster.height(),
            actual_width: flow.width(),
            actual_height: flow.height(),
        });
    }
    Ok(())
}

/// Backward-warp any raster: `out(p) = bilinear_sample(src, p − flow(p))`.
/// Pixels whose sample position falls outside the frame are zero-filled and
/// marked invalid. Shared engine for images, embeddings and feature maps.
fn backward_warp_raster<R: Raster>(
    src: &R,
    flow: &FlowField,
) -> Result<(Vec<f64>, ValidityMask)> {
    require_target_indexed(flow)?;
    require_same_dims(src, flow)?;
    let (w, h) = (src.width(), src.height());
    let channels = src.channels();
    let mut data = vec![0.0; w * h * channels];
    let mut valid = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.uv(x, y);
            let base = (y * w + x) * channels;
            let ok = bilinear_sample_into(
                src,
                x as f64 - u,
                y as f64 - v,
                &mut data[base..base + channels],
            );
            valid.push(ok);
        }
    }
    Ok((data, ValidityMask::new(w, h, valid)?))
}

/// Backward-warp a coordinate embedding (or any feature map) by a
/// target-indexed flow field.
pub fn warp_embedding(
    embedding: &FeatureMap,
    flow: &FlowField,
) -> Result<(FeatureMap, ValidityMask)> {
    let (data, valid) = backward_warp_raster(embedding, flow)?;
    Ok((
        FeatureMap::new(embedding.width(), embedding.height(), embedding.channels(), data)?,
        valid,
    ))
}

/// Backward-warp an image by a target-indexed flow field. Out-of-frame
/// samples produce value 0 and an invalid mask entry — holes stay honest
/// for the downstream consistency filter rather than being inpainted.
pub fn backward_warp_image(image: &Image, flow: &FlowField) -> Result<(Image, ValidityMask)> {
    let (data, valid) = backward_warp_raster(image, flow)?;
    Ok((
        Image::new(image.width(), image.height(), image.channels(), data)?,
        valid,
    ))
}

/// Alternative embedding path: warp the raw canonical coordinates first,
/// then re-encode the warped coordinates. Differs from warping the encoded
/// features by the interpolation error of the sinusoids.
pub fn warp_then_embed(
    grid: &CoordinateGrid,
    flow: &FlowField,
    frequencies: usize,
) -> Result<(CoordinateEmbedding, ValidityMask)> {
    if frequencies == 0 {
        return Err(Error::InvalidParameter {
            name: "frequencies",
            value: 0.0,
            range: "[1, inf)",
        });
    }
    let (coords, valid) = backward_warp_raster(grid.as_features(), flow)?;
    let (w, h) = (grid.width(), grid.height());
    let channels = embedding_channels(frequencies);
    let mut data = vec![0.0; w * h * channels];
    for i in 0..w * h {
        embed_coord(
            coords[2 * i],
            coords[2 * i + 1],
            frequencies,
            &mut data[i * channels..(i + 1) * channels],
        );
    }
    Ok((FeatureMap::new(w, h, channels, data)?, valid))
}
