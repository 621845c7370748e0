//! Evaluation metrics: endpoint error and outlier rate for flow, PSNR and
//! SSIM for images. All reductions use pairwise summation so results do not
//! depend on accumulation order and stay stable at large pixel counts.

use crate::error::{Error, Result};
use crate::raster::{FlowField, Image, ValidityMask};

/// Flow accuracy summary over the evaluated pixel set.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowMetrics {
    /// Mean endpoint error in pixels.
    pub epe: f64,
    /// Outlier percentage: error > 3 px and > 5% of the reference magnitude.
    pub fl_all: f64,
    /// Number of pixels the means were taken over.
    pub evaluated_pixels: usize,
}

impl FlowMetrics {
    /// Line-oriented `key=value` rendering.
    pub fn to_kv(&self) -> String {
        format!(
            "epe={}\nfl_all={}\nevaluated_pixels={}\n",
            self.epe, self.fl_all, self.evaluated_pixels
        )
    }

    /// Single JSON object rendering.
    pub fn to_json(&self) -> String {
        format!(
            "{{\"epe\": {}, \"fl_all\": {}, \"evaluated_pixels\": {}}}",
            self.epe, self.fl_all, self.evaluated_pixels
        )
    }
}

/// Image reconstruction summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageMetrics {
    /// Peak signal-to-noise ratio in dB; +∞ for identical inputs.
    pub psnr: f64,
    /// Structural similarity in [−1, 1].
    pub ssim: f64,
}

impl ImageMetrics {
    pub fn to_kv(&self) -> String {
        format!("psnr={}\nssim={}\n", self.psnr, self.ssim)
    }

    pub fn to_json(&self) -> String {
        // JSON has no infinity literal; the sentinel becomes a string.
        if self.psnr.is_infinite() {
            format!("{{\"psnr\": \"inf\", \"ssim\": {}}}", self.ssim)
        } else {
            format!("{{\"psnr\": {}, \"ssim\": {}}}", self.psnr, self.ssim)
        }
    }
}

/// Sum with pairwise splitting: O(log n) rounding depth instead of O(n).
fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= 32 {
        return values.iter().sum();
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

fn check_flow_pair(pred: &FlowField, gt: &FlowField, valid: &ValidityMask) -> Result<()> {
    if pred.indexing() != gt.indexing() {
        return Err(Error::IndexingMismatch {
            expected: gt.indexing(),
            actual: pred.indexing(),
        });
    }
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::DimensionMismatch {
            expected_width: gt.width(),
            expected_height: gt.height(),
            actual_width: pred.width(),
            actual_height: pred.height(),
        });
    }
    if valid.width() != gt.width() || valid.height() != gt.height() {
        return Err(Error::DimensionMismatch {
            expected_width: gt.width(),
            expected_height: gt.height(),
            actual_width: valid.width(),
            actual_height: valid.height(),
        });
    }
    Ok(())
}

/// Mean endpoint error over valid pixels: `mean ‖pred − gt‖₂`. An empty
/// valid set leaves the mean undefined and is reported as an error.
pub fn epe(pred: &FlowField, gt: &FlowField, valid: &ValidityMask) -> Result<f64> {
    check_flow_pair(pred, gt, valid)?;
    let mut errors = Vec::with_capacity(valid.count_valid());
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            if !valid.get(x, y) {
                continue;
            }
            let (pu, pv) = pred.uv(x, y);
            let (gu, gv) = gt.uv(x, y);
            errors.push(((pu - gu).powi(2) + (pv - gv).powi(2)).sqrt());
        }
    }
    if errors.is_empty() {
        return Err(Error::EmptyValidSet);
    }
    Ok(pairwise_sum(&errors) / errors.len() as f64)
}

/// Outlier percentage over valid pixels, KITTI definition: a pixel is an
/// outlier when its endpoint error exceeds 3 px *and* exceeds 5% of the
/// reference flow magnitude — both comparisons strict.
pub fn fl_all(pred: &FlowField, gt: &FlowField, valid: &ValidityMask) -> Result<f64> {
    check_flow_pair(pred, gt, valid)?;
    let mut outliers = 0usize;
    let mut total = 0usize;
    for y in 0..gt.height() {
        for x in 0..gt.width() {
            if !valid.get(x, y) {
                continue;
            }
            total += 1;
            let (pu, pv) = pred.uv(x, y);
            let (gu, gv) = gt.uv(x, y);
            let err = ((pu - gu).powi(2) + (pv - gv).powi(2)).sqrt();
            let mag = (gu * gu + gv * gv).sqrt();
            if err > 3.0 && err > 0.05 * mag {
                outliers += 1;
            }
        }
    }
    if total == 0 {
        return Err(Error::EmptyValidSet);
    }
    Ok(100.0 * outliers as f64 / total as f64)
}

/// Both flow metrics plus the evaluated pixel count in one pass-friendly
/// bundle.
pub fn flow_metrics(pred: &FlowField, gt: &FlowField, valid: &ValidityMask) -> Result<FlowMetrics> {
    Ok(FlowMetrics {
        epe: epe(pred, gt, valid)?,
        fl_all: fl_all(pred, gt, valid)?,
        evaluated_pixels: valid.count_valid(),
    })
}

fn check_image_pair(a: &Image, b: &Image) -> Result<()> {
    if a.width() != b.width() || a.height() != b.height() {
        return Err(Error::DimensionMismatch {
            expected_width: a.width(),
            expected_height: a.height(),
            actual_width: b.width(),
            actual_height: b.height(),
        });
    }
    if a.channels() != b.channels() {
        return Err(Error::ChannelMismatch {
            expected: a.channels(),
            actual: b.channels(),
        });
    }
    Ok(())
}

/// Peak signal-to-noise ratio in dB over every pixel and channel:
/// `10·log₁₀(peak² / MSE)`. Identical inputs return +∞.
pub fn psnr(a: &Image, b: &Image, peak: f64) -> Result<f64> {
    check_image_pair(a, b)?;
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::InvalidParameter {
            name: "peak",
            value: peak,
            range: "(0, inf)",
        });
    }
    let squares: Vec<f64> = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .collect();
    let mse = pairwise_sum(&squares) / squares.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// PSNR restricted to valid pixels, for filtered evaluation. Errors on an
/// empty valid set.
pub fn psnr_masked(a: &Image, b: &Image, valid: &ValidityMask, peak: f64) -> Result<f64> {
    check_image_pair(a, b)?;
    if valid.width() != a.width() || valid.height() != a.height() {
        return Err(Error::DimensionMismatch {
            expected_width: a.width(),
            expected_height: a.height(),
            actual_width: valid.width(),
            actual_height: valid.height(),
        });
    }
    if !(peak.is_finite() && peak > 0.0) {
        return Err(Error::InvalidParameter {
            name: "peak",
            value: peak,
            range: "(0, inf)",
        });
    }
    let mut squares = Vec::with_capacity(valid.count_valid() * a.channels());
    for y in 0..a.height() {
        for x in 0..a.width() {
            if !valid.get(x, y) {
                continue;
            }
            for (p, q) in a.pixel(x, y).iter().zip(b.pixel(x, y)) {
                squares.push((p - q) * (p - q));
            }
        }
    }
    if squares.is_empty() {
        return Err(Error::EmptyValidSet);
    }
    let mse = pairwise_sum(&squares) / squares.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak / mse).log10())
}

/// SSIM window side length.
const SSIM_WINDOW: usize = 11;
/// Gaussian window standard deviation.
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_RANGE: f64 = 255.0;

/// Rec.601 luma for RGB; grayscale passes through.
fn to_luma(image: &Image) -> Vec<f64> {
    let (w, h) = (image.width(), image.height());
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let p = image.pixel(x, y);
            out.push(if image.channels() == 3 {
                0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
            } else {
                p[0]
            });
        }
    }
    out
}

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let center = (SSIM_WINDOW / 2) as f64;
    let mut total = 0.0;
    for i in 0..SSIM_WINDOW {
        for j in 0..SSIM_WINDOW {
            let d2 = (i as f64 - center).powi(2) + (j as f64 - center).powi(2);
            let v = (-d2 / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[i * SSIM_WINDOW + j] = v;
            total += v;
        }
    }
    for v in w.iter_mut() {
        *v /= total;
    }
    w
}

/// Mean single-scale SSIM with an 11×11 Gaussian window (σ = 1.5) over all
/// window positions fully inside the image. RGB inputs are converted to
/// Rec.601 luma first. Images smaller than the window are rejected.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_image_pair(a, b)?;
    let (w, h) = (a.width(), a.height());
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(Error::ImageTooSmallForWindow {
            width: w,
            height: h,
            window: SSIM_WINDOW,
        });
    }
    let la = to_luma(a);
    let lb = to_luma(b);
    let window = gaussian_window();
    let c1 = (SSIM_K1 * SSIM_RANGE) * (SSIM_K1 * SSIM_RANGE);
    let c2 = (SSIM_K2 * SSIM_RANGE) * (SSIM_K2 * SSIM_RANGE);
    let positions = (h - SSIM_WINDOW + 1) * (w - SSIM_WINDOW + 1);
    let mut scores = Vec::with_capacity(positions);
    for y0 in 0..=h - SSIM_WINDOW {
        for x0 in 0..=w - SSIM_WINDOW {
            let mut mu_a = 0.0;
            let mut mu_b = 0.0;
            for i in 0..SSIM_WINDOW {
                let row = (y0 + i) * w + x0;
                for j in 0..SSIM_WINDOW {
                    let wgt = window[i * SSIM_WINDOW + j];
                    mu_a += wgt * la[row + j];
                    mu_b += wgt * lb[row + j];
                }
            }
            let mut var_a = 0.0;
            let mut var_b = 0.0;
            let mut cov = 0.0;
            for i in 0..SSIM_WINDOW {
                let row = (y0 + i) * w + x0;
                for j in 0..SSIM_WINDOW {
                    let wgt = window[i * SSIM_WINDOW + j];
                    let da = la[row + j] - mu_a;
                    let db = lb[row + j] - mu_b;
                    var_a += wgt * da * da;
                    var_b += wgt * db * db;
                    cov += wgt * da * db;
                }
            }
            let score = ((2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2))
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            scores.push(score);
        }
    }
    Ok(pairwise_sum(&scores) / scores.len() as f64)
}

/// PSNR and SSIM in one bundle.
pub fn image_metrics(a: &Image, b: &Image) -> Result<ImageMetrics> {
    Ok(ImageMetrics {
        psnr: psnr(a, b, SSIM_RANGE)?,
        ssim: ssim(a, b)?,
    })
}
