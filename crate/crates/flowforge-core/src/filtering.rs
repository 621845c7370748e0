//! Inconsistent-pixel filtering: compare the generated next frame against
//! the flow-warped source frame and invalidate pixels where they disagree
//! by more than a threshold, then compute reconstruction losses only over
//! the surviving pixels.

use crate::error::{Error, Result};
use crate::raster::{FlowField, Image, ValidityMask};

/// How per-channel absolute differences collapse to one value per pixel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ChannelRule {
    /// Largest channel difference — the strictest reading.
    #[default]
    Max,
    /// Mean over channels.
    Mean,
}

/// How the masked L1 loss is reduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Reduction {
    /// Plain sum over valid pixels and channels.
    #[default]
    Sum,
    /// Sum divided by (valid pixel count × channels).
    MeanOverValid,
}

/// Threshold and reduction settings for the consistency filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterConfig {
    /// Disagreement threshold on the [0, 255] intensity scale, inclusive.
    pub threshold_z: f64,
    pub reduction: Reduction,
    pub channel_rule: ChannelRule,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            threshold_z: 30.0,
            reduction: Reduction::Sum,
            channel_rule: ChannelRule::Max,
        }
    }
}

impl FilterConfig {
    pub fn with_threshold(threshold_z: f64) -> Self {
        Self {
            threshold_z,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold_z.is_finite() && self.threshold_z >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "threshold_z",
                value: self.threshold_z,
                range: "[0, inf)",
            });
        }
        Ok(())
    }
}

fn require_same_shape(a: &Image, b: &Image) -> Result<()> {
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

/// Per-pixel reliability mask: a pixel survives iff the warp produced it
/// (`warp_valid`) and the aggregated |generated − warped| difference is at
/// most `threshold_z` — the bound is inclusive.
pub fn consistency_mask(
    generated: &Image,
    warped: &Image,
    warp_valid: &ValidityMask,
    cfg: &FilterConfig,
) -> Result<ValidityMask> {
    cfg.validate()?;
    require_same_shape(generated, warped)?;
    if warp_valid.width() != generated.width() || warp_valid.height() != generated.height() {
        return Err(Error::DimensionMismatch {
            expected_width: generated.width(),
            expected_height: generated.height(),
            actual_width: warp_valid.width(),
            actual_height: warp_valid.height(),
        });
    }
    let (w, h) = (generated.width(), generated.height());
    let channels = generated.channels();
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            if !warp_valid.get(x, y) {
                data.push(false);
                continue;
            }
            let gp = generated.pixel(x, y);
            let wp = warped.pixel(x, y);
            let diff = match cfg.channel_rule {
                ChannelRule::Max => gp
                    .iter()
                    .zip(wp)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0f64, f64::max),
                ChannelRule::Mean => {
                    gp.iter().zip(wp).map(|(a, b)| (a - b).abs()).sum::<f64>()
                        / channels as f64
                }
            };
            data.push(diff <= cfg.threshold_z);
        }
    }
    ValidityMask::new(w, h, data)
}

/// Optional extra filter: additionally invalidate pixels whose flow
/// magnitude exceeds `cap`. Not part of the photometric mask — large
/// displacements are a separate unreliability signal.
pub fn flow_magnitude_cap(
    flow: &FlowField,
    valid: &ValidityMask,
    cap: f64,
) -> Result<ValidityMask> {
    if !(cap.is_finite() && cap >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "cap",
            value: cap,
            range: "[0, inf)",
        });
    }
    if valid.width() != flow.width() || valid.height() != flow.height() {
        return Err(Error::DimensionMismatch {
            expected_width: flow.width(),
            expected_height: flow.height(),
            actual_width: valid.width(),
            actual_height: valid.height(),
        });
    }
    let (w, h) = (flow.width(), flow.height());
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.uv(x, y);
            data.push(valid.get(x, y) && (u * u + v * v).sqrt() <= cap);
        }
    }
    ValidityMask::new(w, h, data)
}

/// L1 reconstruction loss restricted to valid pixels. `Sum` adds the
/// absolute differences over every valid pixel and channel;
/// `MeanOverValid` divides that by (valid count × channels). An empty mask
/// yields 0 under either reduction.
pub fn masked_l1(
    pred: &Image,
    target: &Image,
    mask: &ValidityMask,
    cfg: &FilterConfig,
) -> Result<f64> {
    require_same_shape(pred, target)?;
    if mask.width() != pred.width() || mask.height() != pred.height() {
        return Err(Error::DimensionMismatch {
            expected_width: pred.width(),
            expected_height: pred.height(),
            actual_width: mask.width(),
            actual_height: mask.height(),
        });
    }
    let channels = pred.channels();
    let mut sum = 0.0;
    let mut count = 0usize;
    for y in 0..pred.height() {
        for x in 0..pred.width() {
            if !mask.get(x, y) {
                continue;
            }
            count += 1;
            for (a, b) in pred.pixel(x, y).iter().zip(target.pixel(x, y)) {
                sum += (a - b).abs();
            }
        }
    }
    Ok(match cfg.reduction {
        Reduction::Sum => sum,
        Reduction::MeanOverValid => {
            if count == 0 {
                0.0
            } else {
                sum / (count * channels) as f64
            }
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rgb(w: usize, h: usize, f: impl FnMut(usize, usize, usize) -> f64) -> Image {
        Image::from_fn(w, h, 3, f).unwrap()
    }

    #[test]
    fn identical_images_give_back_warp_validity() {
        let img = rgb(4, 4, |x, y, c| (x + y + c) as f64);
        let warp_valid =
            ValidityMask::new(4, 4, (0..16).map(|i| i % 3 != 0).collect()).unwrap();
        let mask =
            consistency_mask(&img, &img, &warp_valid, &FilterConfig::default()).unwrap();
        assert_eq!(mask, warp_valid);
    }

    #[test]
    fn threshold_bound_is_inclusive() {
        let a = Image::constant(2, 2, 1, 100.0).unwrap();
        let b = Image::constant(2, 2, 1, 130.0).unwrap(); // diff exactly 30
        let full = ValidityMask::full(2, 2).unwrap();
        let mask = consistency_mask(&a, &b, &full, &FilterConfig::default()).unwrap();
        assert_eq!(mask.count_valid(), 4);
        let c = Image::constant(2, 2, 1, 130.5).unwrap();
        let mask = consistency_mask(&a, &c, &full, &FilterConfig::default()).unwrap();
        assert_eq!(mask.count_valid(), 0);
    }

    #[test]
    fn channel_max_rule_catches_single_channel_outliers() {
        // Diffs (0, 0, 31): max = 31 > 30 → invalid; mean ≈ 10.3 → valid.
        let a = rgb(1, 1, |_, _, _| 0.0);
        let b = rgb(1, 1, |_, _, c| if c == 2 { 31.0 } else { 0.0 });
        let full = ValidityMask::full(1, 1).unwrap();
        let strict = consistency_mask(&a, &b, &full, &FilterConfig::default()).unwrap();
        assert_eq!(strict.count_valid(), 0);
        let lenient = FilterConfig {
            channel_rule: ChannelRule::Mean,
            ..FilterConfig::default()
        };
        let mean_mask = consistency_mask(&a, &b, &full, &lenient).unwrap();
        assert_eq!(mean_mask.count_valid(), 1);
    }

    #[test]
    fn mask_grows_monotonically_with_threshold() {
        let a = rgb(16, 16, |x, y, c| ((x * 7 + y * 13 + c * 29) % 256) as f64);
        let b = rgb(16, 16, |x, y, c| ((x * 11 + y * 3 + c * 17) % 256) as f64);
        let full = ValidityMask::full(16, 16).unwrap();
        let masks: Vec<ValidityMask> = [20.0, 30.0, 50.0]
            .iter()
            .map(|z| {
                consistency_mask(&a, &b, &full, &FilterConfig::with_threshold(*z)).unwrap()
            })
            .collect();
        for pair in masks.windows(2) {
            for (lo, hi) in pair[0].data().iter().zip(pair[1].data()) {
                assert!(!lo | hi, "valid at the lower threshold must stay valid");
            }
        }
        // And the loss never shrinks as the mask admits more pixels.
        let losses: Vec<f64> = masks
            .iter()
            .map(|m| masked_l1(&a, &b, m, &FilterConfig::default()).unwrap())
            .collect();
        assert!(losses[0] <= losses[1] && losses[1] <= losses[2]);
    }

    #[test]
    fn mask_matches_brute_force_threshold_oracle() {
        let a = rgb(16, 16, |x, y, c| ((x * 31 + y * 5 + c * 3) % 251) as f64);
        let b = rgb(16, 16, |x, y, c| ((x * 2 + y * 47 + c * 19) % 239) as f64);
        let warp_valid =
            ValidityMask::new(16, 16, (0..256).map(|i| i % 7 != 0).collect()).unwrap();
        let cfg = FilterConfig::with_threshold(30.0);
        let mask = consistency_mask(&a, &b, &warp_valid, &cfg).unwrap();
        for y in 0..16 {
            for x in 0..16 {
                let mut max_diff = 0.0f64;
                for c in 0..3 {
                    max_diff = max_diff.max((a.at(x, y, c) - b.at(x, y, c)).abs());
                }
                let expected = warp_valid.get(x, y) && max_diff <= 30.0;
                assert_eq!(mask.get(x, y), expected, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn mask_is_idempotent_and_shift_invariant() {
        let a = rgb(8, 8, |x, y, _| ((x * y) % 200) as f64);
        let b = rgb(8, 8, |x, y, _| ((x + y * 20) % 200) as f64);
        let full = ValidityMask::full(8, 8).unwrap();
        let cfg = FilterConfig::default();
        let m1 = consistency_mask(&a, &b, &full, &cfg).unwrap();
        let m2 = consistency_mask(&a, &b, &full, &cfg).unwrap();
        assert_eq!(m1, m2);
        // Adding the same constant to both images changes no differences.
        let a_shift = rgb(8, 8, |x, y, c| a.at(x, y, c) + 17.0);
        let b_shift = rgb(8, 8, |x, y, c| b.at(x, y, c) + 17.0);
        let m3 = consistency_mask(&a_shift, &b_shift, &full, &cfg).unwrap();
        assert_eq!(m1, m3);
    }

    #[test]
    fn masked_l1_hand_values() {
        let pred = rgb(1, 1, |_, _, c| [1.0, 2.0, 3.0][c]);
        let target = rgb(1, 1, |_, _, _| 0.0);
        let full = ValidityMask::full(1, 1).unwrap();
        let sum_cfg = FilterConfig::default();
        assert_abs_diff_eq!(masked_l1(&pred, &target, &full, &sum_cfg).unwrap(), 6.0);
        let mean_cfg = FilterConfig {
            reduction: Reduction::MeanOverValid,
            ..FilterConfig::default()
        };
        assert_abs_diff_eq!(masked_l1(&pred, &target, &full, &mean_cfg).unwrap(), 2.0);
    }

    #[test]
    fn masked_l1_trivial_cases() {
        let img = rgb(4, 4, |x, y, c| (x * y + c) as f64);
        let full = ValidityMask::full(4, 4).unwrap();
        let cfg = FilterConfig::default();
        assert_eq!(masked_l1(&img, &img, &full, &cfg).unwrap(), 0.0);
        let other = rgb(4, 4, |x, y, c| (x + y + c) as f64 + 5.0);
        let empty = ValidityMask::empty(4, 4).unwrap();
        assert_eq!(masked_l1(&img, &other, &empty, &cfg).unwrap(), 0.0);
        let mean_cfg = FilterConfig {
            reduction: Reduction::MeanOverValid,
            ..FilterConfig::default()
        };
        assert_eq!(masked_l1(&img, &other, &empty, &mean_cfg).unwrap(), 0.0);
    }

    #[test]
    fn flow_cap_invalidates_large_displacements() {
        let flow = FlowField::from_fn(4, 1, crate::raster::FlowIndexing::TargetIndexed, |x, _| {
            (x as f64 * 2.0, 0.0)
        })
        .unwrap();
        let full = ValidityMask::full(4, 1).unwrap();
        let capped = flow_magnitude_cap(&flow, &full, 4.0).unwrap();
        assert_eq!(capped.data(), &[true, true, true, false]);
        assert!(flow_magnitude_cap(&flow, &full, -1.0).is_err());
    }

    #[test]
    fn invalid_threshold_is_rejected() {
        let img = rgb(2, 2, |_, _, _| 0.0);
        let full = ValidityMask::full(2, 2).unwrap();
        let bad = FilterConfig::with_threshold(-3.0);
        assert!(consistency_mask(&img, &img, &full, &bad).is_err());
    }
}
