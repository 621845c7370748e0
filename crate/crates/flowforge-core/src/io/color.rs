//! Flow visualization via the standard optical-flow color wheel.
//!
//! Hue encodes direction, saturation encodes magnitude relative to a
//! normalizer: zero flow renders white, a vector at the normalizer renders
//! the fully saturated wheel color, and anything beyond it is darkened to
//! flag the overshoot. The wheel has 55 entries across six hue transitions
//! (RY 15, YG 6, GC 4, CB 11, BM 13, MR 6).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::raster::{FlowField, Image};

const RY: usize = 15;
const YG: usize = 6;
const GC: usize = 4;
const CB: usize = 11;
const BM: usize = 13;
const MR: usize = 6;

/// Number of wheel entries.
pub const WHEEL_SIZE: usize = RY + YG + GC + CB + BM + MR;

fn make_colorwheel() -> [[f64; 3]; WHEEL_SIZE] {
    let mut wheel = [[0.0; 3]; WHEEL_SIZE];
    let mut k = 0;
    let ramp = |i: usize, n: usize| (255 * i / n) as f64;
    for i in 0..RY {
        wheel[k] = [255.0, ramp(i, RY), 0.0];
        k += 1;
    }
    for i in 0..YG {
        wheel[k] = [255.0 - ramp(i, YG), 255.0, 0.0];
        k += 1;
    }
    for i in 0..GC {
        wheel[k] = [0.0, 255.0, ramp(i, GC)];
        k += 1;
    }
    for i in 0..CB {
        wheel[k] = [0.0, 255.0 - ramp(i, CB), 255.0];
        k += 1;
    }
    for i in 0..BM {
        wheel[k] = [ramp(i, BM), 0.0, 255.0];
        k += 1;
    }
    for i in 0..MR {
        wheel[k] = [255.0, 0.0, 255.0 - ramp(i, MR)];
        k += 1;
    }
    wheel
}

/// Robust normalizer: the 99th-percentile flow magnitude (nearest-rank), so
/// a handful of outlier vectors cannot wash out the rest of the rendering.
fn robust_max(flow: &FlowField) -> f64 {
    let mut magnitudes: Vec<f64> = flow
        .data()
        .chunks_exact(2)
        .map(|p| p[0].hypot(p[1]))
        .collect();
    magnitudes.sort_by(|a, b| a.partial_cmp(b).expect("flow magnitudes are finite"));
    let idx = ((magnitudes.len() - 1) as f64 * 0.99).round() as usize;
    magnitudes[idx]
}

/// Renders `flow` to an RGB image.
///
/// `max_magnitude` sets the saturation normalizer; `None` picks the robust
/// 99th-percentile magnitude automatically (or 1.0 for an all-zero field).
pub fn flow_to_color(flow: &FlowField, max_magnitude: Option<f64>) -> Result<Image> {
    let max = match max_magnitude {
        Some(m) => {
            if !(m.is_finite() && m > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "max_magnitude",
                    value: m,
                    range: "(0, inf)",
                });
            }
            m
        }
        None => {
            let m = robust_max(flow);
            if m > 0.0 {
                m
            } else {
                1.0
            }
        }
    };
    let wheel = make_colorwheel();
    let (w, h) = (flow.width(), flow.height());
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let (u, v) = flow.uv(x, y);
            let fx = u / max;
            let fy = v / max;
            let rad = fx.hypot(fy);
            let angle = (-fy).atan2(-fx) / PI;
            let fk = (angle + 1.0) / 2.0 * (WHEEL_SIZE - 1) as f64;
            let k0 = (fk.floor() as usize).min(WHEEL_SIZE - 1);
            let k1 = (k0 + 1) % WHEEL_SIZE;
            let f = fk - k0 as f64;
            for c in 0..3 {
                let col = (1.0 - f) * wheel[k0][c] + f * wheel[k1][c];
                let shaded = if rad <= 1.0 {
                    // Pull toward white as the magnitude shrinks.
                    255.0 - rad * (255.0 - col)
                } else {
                    // Out of range: darken to make the overshoot visible.
                    col * 0.75
                };
                data.push(shaded);
            }
        }
    }
    Image::new(w, h, 3, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::FlowIndexing;

    #[test]
    fn wheel_hits_the_six_primary_anchors() {
        let wheel = make_colorwheel();
        assert_eq!(wheel.len(), 55);
        assert_eq!(wheel[0], [255.0, 0.0, 0.0]); // red
        assert_eq!(wheel[RY], [255.0, 255.0, 0.0]); // yellow
        assert_eq!(wheel[RY + YG], [0.0, 255.0, 0.0]); // green
        assert_eq!(wheel[RY + YG + GC], [0.0, 255.0, 255.0]); // cyan
        assert_eq!(wheel[RY + YG + GC + CB], [0.0, 0.0, 255.0]); // blue
        assert_eq!(wheel[RY + YG + GC + CB + BM], [255.0, 0.0, 255.0]); // magenta
    }

    #[test]
    fn zero_flow_renders_white() {
        let flow = FlowField::zeros(4, 3, FlowIndexing::SourceIndexed).unwrap();
        let image = flow_to_color(&flow, Some(5.0)).unwrap();
        for y in 0..3 {
            for x in 0..4 {
                assert_eq!(image.pixel(x, y), &[255.0, 255.0, 255.0]);
            }
        }
    }

    #[test]
    fn full_magnitude_axis_flows_hit_frozen_wheel_colors() {
        // +u at the normalizer: atan2(-0.0, -1.0) = -pi, so the angle
        // lands on wheel entry 0, pure red. -u lands halfway around, on
        // entry 27 inside the cyan-blue ramp: (0, 255 - floor(255*2/11),
        // 255) = (0, 209, 255). Both frozen from the wheel arithmetic.
        let flow = FlowField::constant(1, 1, FlowIndexing::SourceIndexed, 8.0, 0.0).unwrap();
        let image = flow_to_color(&flow, Some(8.0)).unwrap();
        assert_eq!(image.pixel(0, 0), &[255.0, 0.0, 0.0]);

        let flow = FlowField::constant(1, 1, FlowIndexing::SourceIndexed, -8.0, 0.0).unwrap();
        let image = flow_to_color(&flow, Some(8.0)).unwrap();
        assert_eq!(image.pixel(0, 0), &[0.0, 209.0, 255.0]);
    }

    #[test]
    fn opposite_directions_get_distinct_hues_at_equal_saturation() {
        for (u, v) in [(3.0, 1.0), (-2.0, 2.5), (0.0, 4.0)] {
            let fwd = FlowField::constant(1, 1, FlowIndexing::SourceIndexed, u, v).unwrap();
            let bwd = FlowField::constant(1, 1, FlowIndexing::SourceIndexed, -u, -v).unwrap();
            let cf = flow_to_color(&fwd, Some(5.0)).unwrap();
            let cb = flow_to_color(&bwd, Some(5.0)).unwrap();
            assert_ne!(cf.pixel(0, 0), cb.pixel(0, 0), "for ({u}, {v})");
            // Every wheel hue keeps one channel at zero, so the minimum
            // channel is a hue-independent saturation witness:
            // min = 255 * (1 - rad) for in-range magnitudes.
            let rad = (u * u + v * v).sqrt() / 5.0;
            let expected_min = 255.0 * (1.0 - rad);
            for img in [&cf, &cb] {
                let min = img
                    .pixel(0, 0)
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                assert!((min - expected_min).abs() < 1e-9, "for ({u}, {v}): {min}");
            }
        }
    }

    #[test]
    fn auto_normalizer_resists_outliers() {
        // 99 unit vectors and one huge one: the percentile tracks the bulk,
        // so the outlier overshoots and is darkened (all channels <= 191.25).
        let mut flow = FlowField::constant(10, 10, FlowIndexing::SourceIndexed, 1.0, 0.0).unwrap();
        flow.set(9, 9, 1000.0, 0.0);
        let image = flow_to_color(&flow, None).unwrap();
        for c in image.pixel(9, 9) {
            assert!(*c <= 0.75 * 255.0 + 1e-9, "outlier channel {c} not darkened");
        }
        // The bulk stays fully saturated (its magnitude equals the
        // normalizer): +u at full magnitude renders pure red.
        assert_eq!(image.pixel(0, 0), &[255.0, 0.0, 0.0]);
    }

    #[test]
    fn all_zero_field_with_auto_normalizer_is_white() {
        let flow = FlowField::zeros(3, 3, FlowIndexing::SourceIndexed).unwrap();
        let image = flow_to_color(&flow, None).unwrap();
        assert_eq!(image.pixel(1, 1), &[255.0, 255.0, 255.0]);
    }

    #[test]
    fn nonpositive_normalizer_is_rejected() {
        let flow = FlowField::zeros(2, 2, FlowIndexing::SourceIndexed).unwrap();
        assert!(matches!(
            flow_to_color(&flow, Some(0.0)),
            Err(Error::InvalidParameter { .. })
        ));
        assert!(matches!(
            flow_to_color(&flow, Some(-1.0)),
            Err(Error::InvalidParameter { .. })
        ));
    }

    #[test]
    fn output_stays_in_display_range() {
        let flow = FlowField::from_fn(16, 16, FlowIndexing::SourceIndexed, |x, y| {
            (x as f64 - 8.0, y as f64 - 8.0)
        })
        .unwrap();
        let image = flow_to_color(&flow, Some(3.0)).unwrap();
        assert_eq!(image.channels(), 3);
        for v in image.data() {
            assert!((0.0..=255.0).contains(v));
        }
    }
}
