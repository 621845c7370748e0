//! Geometric synthesis of the next frame, plus the deterministic numeric
//! conditioning blocks the pipeline composes around it: nearest-valid hole
//! filling, sigmoid-gated adaptive fusion, and single-head cross-view
//! attention over flattened feature tokens.

use crate::error::{Error, Result};
use crate::raster::{bilinear_sample_into, FeatureMap, Image, ValidityMask};
use crate::synthesis::{CoordinateSpace, CorrespondenceGrid};

/// A rendered frame together with its disocclusion holes. Hole pixels
/// always carry image value 0 — enforced at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFrame {
    image: Image,
    coverage: ValidityMask,
}

impl RenderedFrame {
    /// Pair an image with its coverage mask (valid = rendered, invalid =
    /// hole). Every hole pixel must be zero in every channel.
    pub fn new(image: Image, coverage: ValidityMask) -> Result<Self> {
        if image.width() != coverage.width() || image.height() != coverage.height() {
            return Err(Error::DimensionMismatch {
                expected_width: image.width(),
                expected_height: image.height(),
                actual_width: coverage.width(),
                actual_height: coverage.height(),
            });
        }
        for y in 0..image.height() {
            for x in 0..image.width() {
                if !coverage.get(x, y) && image.pixel(x, y).iter().any(|v| *v != 0.0) {
                    return Err(Error::InvalidParameter {
                        name: "hole pixel value",
                        value: image.pixel(x, y)[0],
                        range: "0 at hole pixels",
                    });
                }
            }
        }
        Ok(Self { image, coverage })
    }

    pub fn image(&self) -> &Image {
        &self.image
    }

    pub fn coverage(&self) -> &ValidityMask {
        &self.coverage
    }
}

/// Render the next frame by pulling each covered target pixel's color from
/// the source image at its stored correspondence (bilinear). Target pixels
/// without a correspondence — and the rare edge cases whose sub-pixel
/// source coordinate falls outside the sampling box — become holes.
pub fn render_next_frame(image: &Image, corr: &CorrespondenceGrid) -> Result<RenderedFrame> {
    if corr.space() != CoordinateSpace::Pixel {
        return Err(Error::CorrespondenceNotPixelSpace);
    }
    if image.width() != corr.width() || image.height() != corr.height() {
        return Err(Error::DimensionMismatch {
            expected_width: image.width(),
            expected_height: image.height(),
            actual_width: corr.width(),
            actual_height: corr.height(),
        });
    }
    let (w, h) = (image.width(), image.height());
    let channels = image.channels();
    let mut data = vec![0.0; w * h * channels];
    let mut valid = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let ok = match corr.coord(x, y) {
                Some((sx, sy)) => {
                    let base = (y * w + x) * channels;
                    bilinear_sample_into(image, sx, sy, &mut data[base..base + channels])
                }
                None => false,
            };
            valid.push(ok);
        }
    }
    RenderedFrame::new(
        Image::new(w, h, channels, data)?,
        ValidityMask::new(w, h, valid)?,
    )
}

/// Exact 1D squared Euclidean distance transform (lower envelope of
/// parabolas), after Felzenszwalb & Huttenlocher. `f` holds per-cell source
/// costs, `out` receives `min_q (p − q)² + f(q)`.
fn edt_1d(f: &[f64], out: &mut [f64], hull: &mut [usize], bounds: &mut [f64]) {
    let n = f.len();
    // Intersection of the parabolas rooted at q and p — the abscissa where
    // q's parabola takes over.
    let crossing = |q: usize, p: usize| -> f64 {
        ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64))
            / (2.0 * (q as f64 - p as f64))
    };
    let mut k = 0usize;
    hull[0] = 0;
    bounds[0] = f64::NEG_INFINITY;
    bounds[1] = f64::INFINITY;
    for q in 1..n {
        let mut s = crossing(q, hull[k]);
        while s <= bounds[k] {
            k -= 1; // bounds[0] = −∞ guarantees termination with k = 0
            s = crossing(q, hull[k]);
        }
        k += 1;
        hull[k] = q;
        bounds[k] = s;
        bounds[k + 1] = f64::INFINITY;
    }
    let mut k = 0usize;
    for p in 0..n {
        while bounds[k + 1] < p as f64 {
            k += 1;
        }
        let q = hull[k];
        let d = p as f64 - q as f64;
        out[p] = d * d + f[q];
    }
}

/// Squared distance from every pixel to its nearest valid pixel, exact.
/// Distances are integers (sums of two squares) stored exactly in f64.
fn squared_distance_field(valid: &ValidityMask) -> Vec<f64> {
    let (w, h) = (valid.width(), valid.height());
    // Beyond any possible in-image squared distance, but small enough that
    // adding q² (≤ ~2²⁶ here) keeps full integer precision in f64.
    let far = 1e12;
    // Column pass: 1D distance along y (two linear scans), then squared.
    let mut g = vec![far; w * h];
    for x in 0..w {
        let mut dist = far;
        for y in 0..h {
            if valid.get(x, y) {
                dist = 0.0;
            } else if dist < far {
                dist += 1.0;
            }
            g[y * w + x] = dist;
        }
        dist = g[(h - 1) * w + x];
        for y in (0..h).rev() {
            if valid.get(x, y) {
                dist = 0.0;
            } else if dist < far {
                dist += 1.0;
            }
            if dist < g[y * w + x] {
                g[y * w + x] = dist;
            }
        }
    }
    for v in g.iter_mut() {
        if *v < far {
            *v *= *v;
        }
    }
    // Row pass: lower envelope over columns.
    let mut out = vec![0.0; w * h];
    let mut row_in = vec![0.0; w];
    let mut row_out = vec![0.0; w];
    let mut hull = vec![0usize; w];
    let mut bounds = vec![0.0; w + 1];
    for y in 0..h {
        row_in.copy_from_slice(&g[y * w..(y + 1) * w]);
        edt_1d(&row_in, &mut row_out, &mut hull, &mut bounds);
        out[y * w..(y + 1) * w].copy_from_slice(&row_out);
    }
    out
}

fn exact_isqrt(n: u64) -> Option<u64> {
    let r = (n as f64).sqrt().round() as u64;
    for c in r.saturating_sub(1)..=r + 1 {
        if c * c == n {
            return Some(c);
        }
    }
    None
}

/// Fill every hole with the value of its nearest valid pixel (Euclidean
/// distance; equidistant candidates resolve to the smallest linear index,
/// i.e. topmost then leftmost). Valid pixels pass through unchanged.
pub fn fill_holes_nearest(frame: &RenderedFrame) -> Result<Image> {
    let image = frame.image();
    let mask = frame.coverage();
    if mask.count_valid() == 0 {
        return Err(Error::NoValidPixels);
    }
    if mask.count_valid() == mask.width() * mask.height() {
        return Ok(image.clone());
    }
    let (w, h) = (image.width(), image.height());
    let channels = image.channels();
    let dist2 = squared_distance_field(mask);
    let mut data = image.data().to_vec();
    for y in 0..h {
        for x in 0..w {
            if mask.get(x, y) {
                continue;
            }
            let d2 = dist2[y * w + x].round() as u64;
            // Walk the shell of radius² = d2 in linear-index order: rows
            // top-down, and left candidate before right within a row. The
            // first valid pixel found is the deterministic winner.
            let radius = (d2 as f64).sqrt().floor() as i64 + 1;
            let mut donor = None;
            'search: for dy in -radius..=radius {
                let dy2 = (dy * dy) as u64;
                if dy2 > d2 {
                    continue;
                }
                let ty = y as i64 + dy;
                if ty < 0 || ty >= h as i64 {
                    continue;
                }
                let Some(s) = exact_isqrt(d2 - dy2) else {
                    continue;
                };
                let candidates = if s == 0 { vec![0i64] } else { vec![-(s as i64), s as i64] };
                for dx in candidates {
                    let tx = x as i64 + dx;
                    if tx < 0 || tx >= w as i64 {
                        continue;
                    }
                    if mask.get(tx as usize, ty as usize) {
                        donor = Some((tx as usize, ty as usize));
                        break 'search;
                    }
                }
            }
            let (sx, sy) = donor.expect("distance field guarantees a donor on its shell");
            for c in 0..channels {
                data[(y * w + x) * channels + c] = image.at(sx, sy, c);
            }
        }
    }
    Image::new(w, h, channels, data)
}

/// Weights of the single-output-channel convolution that gates fusion.
/// Kernel layout is `[ky][kx][channel]` row-major: the weight applied to
/// input channel `c` at window offset `(kx − k/2, ky − k/2)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionParams {
    kernel_size: usize,
    in_channels: usize,
    kernel: Vec<f64>,
    bias: f64,
}

impl FusionParams {
    pub fn new(kernel_size: usize, in_channels: usize, kernel: Vec<f64>, bias: f64) -> Result<Self> {
        if kernel_size == 0 || kernel_size % 2 == 0 {
            return Err(Error::InvalidParameter {
                name: "kernel_size",
                value: kernel_size as f64,
                range: "odd, >= 1",
            });
        }
        if in_channels == 0 {
            return Err(Error::InvalidChannelCount { channels: 0 });
        }
        let expected = kernel_size * kernel_size * in_channels;
        if kernel.len() != expected {
            return Err(Error::DataLengthMismatch {
                expected,
                actual: kernel.len(),
            });
        }
        if kernel.iter().any(|v| !v.is_finite()) || !bias.is_finite() {
            return Err(Error::NonFinite {
                what: "fusion weights",
            });
        }
        Ok(Self {
            kernel_size,
            in_channels,
            kernel,
            bias,
        })
    }

    /// All-zero weights: the fusion gate outputs exactly 0.5 everywhere.
    pub fn zeros(kernel_size: usize, in_channels: usize) -> Result<Self> {
        Self::new(
            kernel_size,
            in_channels,
            vec![0.0; kernel_size * kernel_size * in_channels],
            0.0,
        )
    }

    /// A hand-built gate that trusts warped content wherever the validity
    /// channel is on: the kernel reads only the mask channel's center tap
    /// with weight `gain`, biased by `−gain/2`, so the sigmoid saturates
    /// toward 1 on valid pixels and toward 0 in holes.
    pub fn mask_gate(kernel_size: usize, in_channels: usize, gain: f64) -> Result<Self> {
        let mut kernel = vec![0.0; kernel_size * kernel_size * in_channels];
        let center = kernel_size / 2;
        let mask_channel = in_channels - 1;
        kernel[(center * kernel_size + center) * in_channels + mask_channel] = gain;
        Self::new(kernel_size, in_channels, kernel, -gain / 2.0)
    }

    pub fn kernel_size(&self) -> usize {
        self.kernel_size
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    /// Parse from plain text: first line `kernel_size in_channels`, then
    /// whitespace-separated kernel weights in layout order, then the bias.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| Error::MetaParse {
            detail: "empty fusion weight file".into(),
        })?;
        let mut parts = header.split_whitespace();
        let parse_dim = |tok: Option<&str>| -> Result<usize> {
            tok.and_then(|t| t.parse().ok()).ok_or_else(|| Error::MetaParse {
                detail: format!("bad fusion header {header:?}"),
            })
        };
        let kernel_size = parse_dim(parts.next())?;
        let in_channels = parse_dim(parts.next())?;
        let mut values = Vec::new();
        for line in lines {
            for tok in line.split_whitespace() {
                let v: f64 = tok.parse().map_err(|_| Error::MetaParse {
                    detail: format!("non-numeric fusion weight {tok:?}"),
                })?;
                values.push(v);
            }
        }
        let expected = kernel_size * kernel_size * in_channels;
        if values.len() != expected + 1 {
            return Err(Error::DataLengthMismatch {
                expected: expected + 1,
                actual: values.len(),
            });
        }
        let bias = values.pop().expect("length checked above");
        Self::new(kernel_size, in_channels, values, bias)
    }

    /// Serialize in the format [`FusionParams::from_text`] reads.
    pub fn to_text(&self) -> String {
        use std::fmt::Write;
        let mut out = format!("{} {}\n", self.kernel_size, self.in_channels);
        for chunk in self.kernel.chunks(self.in_channels) {
            for v in chunk {
                write!(out, "{v} ").expect("writing to string cannot fail");
            }
            out.push('\n');
        }
        writeln!(out, "{}", self.bias).expect("writing to string cannot fail");
        out
    }
}

/// Numerically careful logistic function. The pre-activation is clamped to
/// ±36, the widest range where the double-precision result stays strictly
/// inside (0, 1); beyond it the output would round to exactly 0 or 1.
fn sigmoid(z: f64) -> f64 {
    let z = z.clamp(-36.0, 36.0);
    1.0 / (1.0 + (-z).exp())
}

/// Per-pixel fusion gate: sigmoid of a zero-padded, stride-1 convolution
/// over the channel-concatenation `[generated | warped | validity]`, where
/// the validity channel is 1 on valid pixels and 0 in holes. Every output
/// lies strictly inside (0, 1).
pub fn fusion_weights(
    i_gen: &Image,
    i_warp: &Image,
    mask: &ValidityMask,
    params: &FusionParams,
) -> Result<FeatureMap> {
    let (w, h) = (i_gen.width(), i_gen.height());
    if i_warp.width() != w || i_warp.height() != h {
        return Err(Error::DimensionMismatch {
            expected_width: w,
            expected_height: h,
            actual_width: i_warp.width(),
            actual_height: i_warp.height(),
        });
    }
    if mask.width() != w || mask.height() != h {
        return Err(Error::DimensionMismatch {
            expected_width: w,
            expected_height: h,
            actual_width: mask.width(),
            actual_height: mask.height(),
        });
    }
    let cg = i_gen.channels();
    let cw = i_warp.channels();
    let c_in = cg + cw + 1;
    if params.in_channels != c_in {
        return Err(Error::ChannelMismatch {
            expected: c_in,
            actual: params.in_channels,
        });
    }
    // Concatenated input, materialized once so the convolution below reads
    // a plain row-major buffer.
    let mut input = vec![0.0; w * h * c_in];
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * c_in;
            input[base..base + cg].copy_from_slice(i_gen.pixel(x, y));
            input[base + cg..base + cg + cw].copy_from_slice(i_warp.pixel(x, y));
            input[base + cg + cw] = if mask.get(x, y) { 1.0 } else { 0.0 };
        }
    }
    let k = params.kernel_size;
    let half = (k / 2) as i64;
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = params.bias;
            for ky in 0..k {
                let sy = y as i64 + ky as i64 - half;
                if sy < 0 || sy >= h as i64 {
                    continue; // zero padding contributes nothing
                }
                for kx in 0..k {
                    let sx = x as i64 + kx as i64 - half;
                    if sx < 0 || sx >= w as i64 {
                        continue;
                    }
                    let in_base = (sy as usize * w + sx as usize) * c_in;
                    let k_base = (ky * k + kx) * c_in;
                    for c in 0..c_in {
                        acc += params.kernel[k_base + c] * input[in_base + c];
                    }
                }
            }
            out[y * w + x] = sigmoid(acc);
        }
    }
    FeatureMap::new(w, h, 1, out)
}

/// Blend per pixel and channel: `w·warped + (1−w)·generated`. The weight
/// map must be single-channel with every value in [0, 1]; the result is
/// clamped to the per-pixel interval the two inputs span, guarding the
/// convexity guarantee against rounding drift at the interval ends.
pub fn fuse(i_gen: &Image, i_warp: &Image, weights: &FeatureMap) -> Result<Image> {
    let (w, h) = (i_gen.width(), i_gen.height());
    let channels = i_gen.channels();
    if i_warp.width() != w || i_warp.height() != h || i_warp.channels() != channels {
        return Err(Error::DimensionMismatch {
            expected_width: w,
            expected_height: h,
            actual_width: i_warp.width(),
            actual_height: i_warp.height(),
        });
    }
    if weights.width() != w || weights.height() != h {
        return Err(Error::DimensionMismatch {
            expected_width: w,
            expected_height: h,
            actual_width: weights.width(),
            actual_height: weights.height(),
        });
    }
    if weights.channels() != 1 {
        return Err(Error::ChannelMismatch {
            expected: 1,
            actual: weights.channels(),
        });
    }
    if let Some(bad) = weights.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
        return Err(Error::WeightOutOfRange { value: *bad });
    }
    Image::from_fn(w, h, channels, |x, y, c| {
        let wv = weights.at(x, y, 0);
        let g = i_gen.at(x, y, c);
        let p = i_warp.at(x, y, c);
        (wv * p + (1.0 - wv) * g).clamp(g.min(p), g.max(p))
    })
}

/// Softmax weights of one query against a key list, max-subtracted for
/// stability. `weights` receives one entry per key and sums to 1.
fn fill_attention_weights(query: &[f64], keys: &[&[f64]], scale: f64, weights: &mut [f64]) {
    debug_assert_eq!(keys.len(), weights.len());
    let mut max_score = f64::NEG_INFINITY;
    for (slot, key) in weights.iter_mut().zip(keys) {
        let mut dot = 0.0;
        for (a, b) in query.iter().zip(*key) {
            dot += a * b;
        }
        *slot = dot * scale;
        max_score = max_score.max(*slot);
    }
    let mut total = 0.0;
    for slot in weights.iter_mut() {
        *slot = (*slot - max_score).exp();
        total += *slot;
    }
    for slot in weights.iter_mut() {
        *slot /= total;
    }
}

/// Single-head cross-view attention over flattened pixel tokens: queries
/// are the second view's features, keys and values the concatenation of
/// both views' tokens (first view first). `scale` defaults to `1/√d`.
/// Rows are processed one at a time — the N×2N score matrix never
/// materializes.
pub fn cross_view_attention(
    a_t: &FeatureMap,
    a_t1: &FeatureMap,
    scale: Option<f64>,
) -> Result<FeatureMap> {
    let (w, h, d) = (a_t.width(), a_t.height(), a_t.channels());
    if a_t1.width() != w || a_t1.height() != h {
        return Err(Error::DimensionMismatch {
            expected_width: w,
            expected_height: h,
            actual_width: a_t1.width(),
            actual_height: a_t1.height(),
        });
    }
    if a_t1.channels() != d {
        return Err(Error::ChannelMismatch {
            expected: d,
            actual: a_t1.channels(),
        });
    }
    let scale = scale.unwrap_or(1.0 / (d as f64).sqrt());
    let n = w * h;
    let mut keys: Vec<&[f64]> = Vec::with_capacity(2 * n);
    for i in 0..n {
        keys.push(&a_t.data()[i * d..(i + 1) * d]);
    }
    for i in 0..n {
        keys.push(&a_t1.data()[i * d..(i + 1) * d]);
    }
    let mut weights = vec![0.0; 2 * n];
    let mut out = vec![0.0; n * d];
    for i in 0..n {
        let query = &a_t1.data()[i * d..(i + 1) * d];
        fill_attention_weights(query, &keys, scale, &mut weights);
        let slot = &mut out[i * d..(i + 1) * d];
        for (wgt, value) in weights.iter().zip(&keys) {
            for (o, v) in slot.iter_mut().zip(*value) {
                *o += wgt * v;
            }
        }
    }
    FeatureMap::new(w, h, d, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ValidityMask;
    use approx::assert_abs_diff_eq;

    fn frame_with_holes(image: Image, holes: &[(usize, usize)]) -> RenderedFrame {
        let (w, h) = (image.width(), image.height());
        let mut mask = vec![true; w * h];
        for (x, y) in holes {
            mask[y * w + x] = false;
        }
        let mask = ValidityMask::new(w, h, mask).unwrap();
        // Zero out the hole pixels to satisfy the frame invariant.
        let mut data = image.data().to_vec();
        for (x, y) in holes {
            for c in 0..image.channels() {
                data[(y * w + x) * image.channels() + c] = 0.0;
            }
        }
        RenderedFrame::new(Image::new(w, h, image.channels(), data).unwrap(), mask).unwrap()
    }

    #[test]
    fn rendered_frame_rejects_nonzero_holes() {
        let image = Image::constant(2, 2, 1, 5.0).unwrap();
        let mask = ValidityMask::new(2, 2, vec![true, false, true, true]).unwrap();
        assert!(RenderedFrame::new(image, mask).is_err());
    }

    #[test]
    fn render_identity_correspondence_is_bit_exact() {
        let image = Image::from_fn(7, 5, 3, |x, y, c| (x * 3 + y * 21 + c) as f64).unwrap();
        let corr = CorrespondenceGrid::identity(7, 5).unwrap();
        let frame = render_next_frame(&image, &corr).unwrap();
        assert_eq!(frame.image(), &image);
        assert_eq!(frame.coverage().count_valid(), 35);
    }

    #[test]
    fn render_marks_uncovered_pixels_as_holes() {
        // Correspondence valid only on the left column.
        let (w, h) = (4, 2);
        let mut valid = vec![false; w * h];
        valid[0] = true;
        valid[w] = true;
        let mut data = vec![f64::NAN; 2 * w * h];
        data[0] = 2.0;
        data[1] = 0.0;
        data[2 * w] = 3.0;
        data[2 * w + 1] = 1.0;
        let corr = CorrespondenceGrid::new(
            w,
            h,
            CoordinateSpace::Pixel,
            data,
            ValidityMask::new(w, h, valid).unwrap(),
        )
        .unwrap();
        let image = Image::from_fn(w, h, 1, |x, y, _| (y * w + x) as f64).unwrap();
        let frame = render_next_frame(&image, &corr).unwrap();
        assert_eq!(frame.image().at(0, 0, 0), image.at(2, 0, 0));
        assert_eq!(frame.image().at(0, 1, 0), image.at(3, 1, 0));
        assert_eq!(frame.coverage().count_valid(), 2);
        assert_eq!(frame.image().at(1, 0, 0), 0.0);
    }

    #[test]
    fn render_rejects_normalized_grids() {
        use crate::synthesis::normalize_correspondence;
        let image = Image::constant(4, 4, 1, 1.0).unwrap();
        let corr = CorrespondenceGrid::identity(4, 4).unwrap();
        let norm = normalize_correspondence(&corr).unwrap();
        assert!(matches!(
            render_next_frame(&image, &norm),
            Err(Error::CorrespondenceNotPixelSpace)
        ));
    }

    #[test]
    fn fill_holes_identity_when_no_holes() {
        let image = Image::from_fn(5, 5, 1, |x, y, _| (x + y) as f64).unwrap();
        let frame =
            RenderedFrame::new(image.clone(), ValidityMask::full(5, 5).unwrap()).unwrap();
        assert_eq!(fill_holes_nearest(&frame).unwrap(), image);
    }

    #[test]
    fn fill_single_hole_takes_surrounding_value() {
        let image = Image::constant(5, 5, 3, 100.0).unwrap();
        let frame = frame_with_holes(image, &[(2, 2)]);
        let filled = fill_holes_nearest(&frame).unwrap();
        for c in 0..3 {
            assert_eq!(filled.at(2, 2, c), 100.0);
        }
    }

    #[test]
    fn fill_hole_strip_takes_nearer_side() {
        // Columns 0–1 hold 10, columns 5–6 hold 200, strip 2–4 is holes.
        // Column 2 and 3 are nearer the left; column 4 is nearer the right.
        let image = Image::from_fn(7, 3, 1, |x, _, _| {
            if x < 2 {
                10.0
            } else if x > 4 {
                200.0
            } else {
                0.0
            }
        })
        .unwrap();
        let holes: Vec<(usize, usize)> =
            (2..5).flat_map(|x| (0..3).map(move |y| (x, y))).collect();
        let frame = frame_with_holes(image, &holes);
        let filled = fill_holes_nearest(&frame).unwrap();
        for y in 0..3 {
            assert_eq!(filled.at(2, y, 0), 10.0);
            assert_eq!(filled.at(3, y, 0), 10.0); // distance 2 left vs 2 right: tie → smaller index (left)
            assert_eq!(filled.at(4, y, 0), 200.0);
        }
    }

    #[test]
    fn fill_tie_breaks_by_smaller_linear_index() {
        // Hole at (1, 1) with all four axis neighbors valid and distinct:
        // the topmost equidistant donor (0·w is smallest index) must win.
        let image = Image::from_fn(3, 3, 1, |x, y, _| (y * 3 + x) as f64).unwrap();
        let frame = frame_with_holes(image, &[(1, 1)]);
        let filled = fill_holes_nearest(&frame).unwrap();
        // Donors at distance 1: (1,0) idx 1, (0,1) idx 3, (2,1) idx 5,
        // (1,2) idx 7 → pixel (1,0) wins with value 1.
        assert_eq!(filled.at(1, 1, 0), 1.0);
    }

    #[test]
    fn fill_matches_brute_force_oracle() {
        // Randomized holes; the oracle scans every valid pixel per hole.
        let (w, h) = (17, 13);
        let image = Image::from_fn(w, h, 1, |x, y, _| ((x * 31 + y * 17) % 251) as f64).unwrap();
        let mut mask = vec![true; w * h];
        let mut state = 0xFEED_u64;
        for m in mask.iter_mut() {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            *m = (state >> 33) % 10 < 6; // ~40% holes
        }
        mask[0] = true; // keep at least one valid pixel
        let valid = ValidityMask::new(w, h, mask).unwrap();
        let mut data = image.data().to_vec();
        for i in 0..w * h {
            if !valid.data()[i] {
                data[i] = 0.0;
            }
        }
        let frame = RenderedFrame::new(Image::new(w, h, 1, data).unwrap(), valid.clone()).unwrap();
        let filled = fill_holes_nearest(&frame).unwrap();
        for y in 0..h {
            for x in 0..w {
                if valid.get(x, y) {
                    assert_eq!(filled.at(x, y, 0), image.at(x, y, 0));
                    continue;
                }
                let mut best = (u64::MAX, usize::MAX, 0.0);
                for sy in 0..h {
                    for sx in 0..w {
                        if !valid.get(sx, sy) {
                            continue;
                        }
                        let d2 = ((sx as i64 - x as i64).pow(2)
                            + (sy as i64 - y as i64).pow(2)) as u64;
                        let idx = sy * w + sx;
                        if (d2, idx) < (best.0, best.1) {
                            best = (d2, idx, image.at(sx, sy, 0));
                        }
                    }
                }
                assert_eq!(
                    filled.at(x, y, 0),
                    best.2,
                    "hole ({x},{y}) filled from the wrong donor"
                );
            }
        }
    }

    #[test]
    fn fill_errors_on_all_holes() {
        let image = Image::constant(3, 3, 1, 0.0).unwrap();
        let frame = RenderedFrame::new(image, ValidityMask::empty(3, 3).unwrap()).unwrap();
        assert!(matches!(
            fill_holes_nearest(&frame),
            Err(Error::NoValidPixels)
        ));
    }

    #[test]
    fn fusion_weights_zero_params_give_half() {
        let gen = Image::constant(4, 4, 3, 80.0).unwrap();
        let warp = Image::constant(4, 4, 3, 120.0).unwrap();
        let mask = ValidityMask::full(4, 4).unwrap();
        let params = FusionParams::zeros(3, 7).unwrap();
        let w = fusion_weights(&gen, &warp, &mask, &params).unwrap();
        for v in w.data() {
            assert_eq!(*v, 0.5);
        }
    }

    #[test]
    fn fusion_weights_saturate_with_large_bias() {
        let gen = Image::constant(3, 3, 1, 0.0).unwrap();
        let warp = Image::constant(3, 3, 1, 0.0).unwrap();
        let mask = ValidityMask::full(3, 3).unwrap();
        let high = FusionParams::new(1, 3, vec![0.0; 3], 20.0).unwrap();
        for v in fusion_weights(&gen, &warp, &mask, &high).unwrap().data() {
            assert!((*v - 1.0).abs() < 1e-8, "sigmoid(20) should be ≈ 1, got {v}");
            assert!(*v < 1.0);
        }
        let low = FusionParams::new(1, 3, vec![0.0; 3], -20.0).unwrap();
        for v in fusion_weights(&gen, &warp, &mask, &low).unwrap().data() {
            assert!(v.abs() < 1e-8);
            assert!(*v > 0.0);
        }
    }

    #[test]
    fn fusion_weights_stay_strictly_inside_unit_interval() {
        // Extreme weights would push a plain sigmoid to exactly 0 or 1.
        let gen = Image::constant(2, 2, 1, 255.0).unwrap();
        let warp = Image::constant(2, 2, 1, 255.0).unwrap();
        let mask = ValidityMask::full(2, 2).unwrap();
        for sign in [1.0, -1.0] {
            let params = FusionParams::new(1, 3, vec![sign * 1e6, 0.0, 0.0], 0.0).unwrap();
            for v in fusion_weights(&gen, &warp, &mask, &params).unwrap().data() {
                assert!(*v > 0.0 && *v < 1.0, "weight {v} left (0, 1)");
            }
        }
    }

    #[test]
    fn fusion_weights_single_pixel_hand_case() {
        // 1×1 kernel, 1×1 image: z = w·[gen, warp, mask]ᵀ + b with
        // gen=10, warp=20, mask=1, w=(0.1, −0.05, 2), b=0.5 → z = 2.5.
        let gen = Image::constant(1, 1, 1, 10.0).unwrap();
        let warp = Image::constant(1, 1, 1, 20.0).unwrap();
        let mask = ValidityMask::full(1, 1).unwrap();
        let params = FusionParams::new(1, 3, vec![0.1, -0.05, 2.0], 0.5).unwrap();
        let w = fusion_weights(&gen, &warp, &mask, &params).unwrap();
        let expected = 1.0 / (1.0 + (-2.5f64).exp());
        assert_abs_diff_eq!(w.at(0, 0, 0), expected, epsilon = 1e-15);
    }

    #[test]
    fn fusion_weights_reject_channel_mismatch() {
        let gen = Image::constant(2, 2, 3, 0.0).unwrap();
        let warp = Image::constant(2, 2, 3, 0.0).unwrap();
        let mask = ValidityMask::full(2, 2).unwrap();
        let params = FusionParams::zeros(3, 5).unwrap(); // needs 7
        assert!(matches!(
            fusion_weights(&gen, &warp, &mask, &params),
            Err(Error::ChannelMismatch { expected: 7, actual: 5 })
        ));
    }

    #[test]
    fn fusion_params_text_round_trip() {
        let params = FusionParams::new(3, 2, (0..18).map(|i| i as f64 / 4.0).collect(), -1.25)
            .unwrap();
        let text = params.to_text();
        assert_eq!(FusionParams::from_text(&text).unwrap(), params);
        assert!(FusionParams::from_text("").is_err());
        assert!(FusionParams::from_text("3 2\n1 2 3").is_err());
    }

    #[test]
    fn fuse_endpoint_weights_select_inputs() {
        let gen = Image::constant(3, 3, 1, 100.0).unwrap();
        let warp = Image::constant(3, 3, 1, 200.0).unwrap();
        let ones = FeatureMap::new(3, 3, 1, vec![1.0; 9]).unwrap();
        assert_eq!(fuse(&gen, &warp, &ones).unwrap(), warp);
        let zeros = FeatureMap::new(3, 3, 1, vec![0.0; 9]).unwrap();
        assert_eq!(fuse(&gen, &warp, &zeros).unwrap(), gen);
        let quarter = FeatureMap::new(3, 3, 1, vec![0.25; 9]).unwrap();
        for v in fuse(&gen, &warp, &quarter).unwrap().data() {
            assert_abs_diff_eq!(*v, 125.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn fuse_rejects_out_of_range_weights() {
        let gen = Image::constant(2, 2, 1, 0.0).unwrap();
        let warp = Image::constant(2, 2, 1, 0.0).unwrap();
        let bad = FeatureMap::new(2, 2, 1, vec![0.5, 1.5, 0.5, 0.5]).unwrap();
        assert!(matches!(
            fuse(&gen, &warp, &bad),
            Err(Error::WeightOutOfRange { .. })
        ));
    }

    #[test]
    fn fuse_output_is_convex_combination() {
        let mut state = 31u64;
        let mut next = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        let n = 100;
        let gen = Image::from_fn(n, n, 1, |_, _, _| next() * 255.0).unwrap();
        let warp = Image::from_fn(n, n, 1, |_, _, _| next() * 255.0).unwrap();
        let weights = FeatureMap::from_fn(n, n, 1, |_, _, _| next()).unwrap();
        let fused = fuse(&gen, &warp, &weights).unwrap();
        for y in 0..n {
            for x in 0..n {
                let (a, b) = (gen.at(x, y, 0), warp.at(x, y, 0));
                let v = fused.at(x, y, 0);
                assert!(v >= a.min(b) && v <= a.max(b), "{v} outside [{a}, {b}]");
            }
        }
    }

    #[test]
    fn attention_single_token_hand_case() {
        // q = 0 against keys {2, 0}: scores (0, 0) → weights (0.5, 0.5)
        // → output 0.5·2 + 0.5·0 = 1.
        let a_t = FeatureMap::new(1, 1, 1, vec![2.0]).unwrap();
        let a_t1 = FeatureMap::new(1, 1, 1, vec![0.0]).unwrap();
        let out = cross_view_attention(&a_t, &a_t1, None).unwrap();
        assert_abs_diff_eq!(out.at(0, 0, 0), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn attention_over_identical_values_returns_the_value() {
        let a = FeatureMap::new(1, 1, 2, vec![3.0, -1.0]).unwrap();
        let out = cross_view_attention(&a, &a, None).unwrap();
        assert_abs_diff_eq!(out.at(0, 0, 0), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(out.at(0, 0, 1), -1.0, epsilon = 1e-12);
    }

    #[test]
    fn attention_weights_sum_to_one() {
        let keys_store: Vec<Vec<f64>> = (0..6).map(|i| vec![i as f64, -(i as f64)]).collect();
        let keys: Vec<&[f64]> = keys_store.iter().map(|k| k.as_slice()).collect();
        let mut weights = vec![0.0; 6];
        fill_attention_weights(&[1.0, 0.5], &keys, 1.0 / 2f64.sqrt(), &mut weights);
        let sum: f64 = weights.iter().sum();
        assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-6);
        assert!(weights.iter().all(|w| *w > 0.0));
    }

    #[test]
    fn attention_is_stable_for_huge_scores() {
        // Score magnitudes near 1e4 overflow a naive softmax (e^10000).
        let a_t = FeatureMap::new(1, 1, 1, vec![100.0]).unwrap();
        let a_t1 = FeatureMap::new(1, 1, 1, vec![100.0]).unwrap();
        let out = cross_view_attention(&a_t, &a_t1, Some(1.0)).unwrap();
        assert!(out.at(0, 0, 0).is_finite());
        assert_abs_diff_eq!(out.at(0, 0, 0), 100.0, epsilon = 1e-9);
    }

    #[test]
    fn attention_is_permutation_invariant_over_keys() {
        let keys_store: Vec<Vec<f64>> =
            (0..5).map(|i| vec![(i as f64 * 0.7).sin(), (i as f64 * 0.3).cos()]).collect();
        let query = [0.4, -0.9];
        let scale = 1.0 / 2f64.sqrt();
        let attend = |order: &[usize]| -> Vec<f64> {
            let keys: Vec<&[f64]> = order.iter().map(|i| keys_store[*i].as_slice()).collect();
            let mut weights = vec![0.0; keys.len()];
            fill_attention_weights(&query, &keys, scale, &mut weights);
            let mut out = vec![0.0; 2];
            for (w, k) in weights.iter().zip(&keys) {
                out[0] += w * k[0];
                out[1] += w * k[1];
            }
            out
        };
        let forward = attend(&[0, 1, 2, 3, 4]);
        let shuffled = attend(&[3, 0, 4, 2, 1]);
        assert_abs_diff_eq!(forward[0], shuffled[0], epsilon = 1e-12);
        assert_abs_diff_eq!(forward[1], shuffled[1], epsilon = 1e-12);
    }

    #[test]
    fn attention_output_shape_matches_input() {
        let a_t = FeatureMap::from_fn(3, 2, 4, |x, y, c| (x + y + c) as f64 * 0.1).unwrap();
        let a_t1 = FeatureMap::from_fn(3, 2, 4, |x, y, c| (x * y * (c + 1)) as f64 * 0.05).unwrap();
        let out = cross_view_attention(&a_t, &a_t1, None).unwrap();
        assert_eq!((out.width(), out.height(), out.channels()), (3, 2, 4));
        assert!(out.data().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn attention_rejects_shape_mismatch() {
        let a = FeatureMap::new(2, 2, 1, vec![0.0; 4]).unwrap();
        let b = FeatureMap::new(2, 2, 2, vec![0.0; 8]).unwrap();
        assert!(matches!(
            cross_view_attention(&a, &b, None),
            Err(Error::ChannelMismatch { .. })
        ));
        let c = FeatureMap::new(3, 2, 1, vec![0.0; 6]).unwrap();
        assert!(matches!(
            cross_view_attention(&a, &c, None),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
