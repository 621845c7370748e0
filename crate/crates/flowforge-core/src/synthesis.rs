//! Dense flow synthesis from depth and a virtual camera move.
//!
//! The pipeline: lift every source pixel with valid depth to 3D, transform
//! it by the relative camera pose, project it back into the target view,
//! and splat it to its nearest target pixel with a z-buffer so nearer
//! surfaces win occlusion conflicts. The surviving correspondence grid maps
//! each covered target pixel to a real-valued source coordinate; dense flow
//! is the displacement between the two. Target pixels nothing mapped to are
//! disocclusions and stay invalid.

use crate::camera::{Intrinsics, SE3Pose};
use crate::error::{Error, Result};
use crate::raster::{DepthMap, FlowField, FlowIndexing, ValidityMask};
use crate::rng::{indexed_u01, SplitMix64};
use nalgebra::Vector3;

/// Coordinate units of a correspondence grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CoordinateSpace {
    /// Source coordinates in pixels, `[0, W−1] × [0, H−1]`.
    Pixel,
    /// Align-corners normalized coordinates in `[−1, 1]²`.
    NormalizedAlignCorners,
}

/// Per-target-pixel real-valued source coordinate with a validity mask.
/// Invalid entries store NaN on purpose: they must never be read as
/// coordinates, and the only accessor returns `None` for them.
#[derive(Debug, Clone)]
pub struct CorrespondenceGrid {
    width: usize,
    height: usize,
    space: CoordinateSpace,
    data: Vec<f64>,
    valid: ValidityMask,
}

impl CorrespondenceGrid {
    pub fn new(
        width: usize,
        height: usize,
        space: CoordinateSpace,
        data: Vec<f64>,
        valid: ValidityMask,
    ) -> Result<Self> {
        if valid.width() != width || valid.height() != height {
            return Err(Error::DimensionMismatch {
                expected_width: width,
                expected_height: height,
                actual_width: valid.width(),
                actual_height: valid.height(),
            });
        }
        let expected = 2 * width * height;
        if data.len() != expected {
            return Err(Error::DataLengthMismatch {
                expected,
                actual: data.len(),
            });
        }
        for (i, is_valid) in valid.data().iter().enumerate() {
            if *is_valid && (!data[2 * i].is_finite() || !data[2 * i + 1].is_finite()) {
                return Err(Error::NonFinite {
                    what: "correspondence coordinate marked valid",
                });
            }
        }
        Ok(Self {
            width,
            height,
            space,
            data,
            valid,
        })
    }

    /// The identity grid in pixel space: every pixel maps to itself.
    pub fn identity(width: usize, height: usize) -> Result<Self> {
        let mut data = Vec::with_capacity(2 * width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(x as f64);
                data.push(y as f64);
            }
        }
        Self::new(
            width,
            height,
            CoordinateSpace::Pixel,
            data,
            ValidityMask::full(width, height)?,
        )
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn space(&self) -> CoordinateSpace {
        self.space
    }

    pub fn valid(&self) -> &ValidityMask {
        &self.valid
    }

    /// Source coordinate stored at target pixel `(x, y)`, or `None` where
    /// no source pixel mapped (disocclusion / out-of-frame).
    pub fn coord(&self, x: usize, y: usize) -> Option<(f64, f64)> {
        if !self.valid.get(x, y) {
            return None;
        }
        let i = 2 * (y * self.width + x);
        Some((self.data[i], self.data[i + 1]))
    }

    /// Marks `(x, y)` as having no correspondence, replacing its coordinate
    /// with the NaN sentinel.
    pub fn invalidate(&mut self, x: usize, y: usize) {
        self.valid.set(x, y, false);
        let i = 2 * (y * self.width + x);
        self.data[i] = f64::NAN;
        self.data[i + 1] = f64::NAN;
    }
}

/// Parameters of the virtual camera move.
#[derive(Debug, Clone)]
pub struct MotionConfig {
    /// Translation magnitude range in meters, inclusive-exclusive draw.
    pub translation_range: (f64, f64),
    /// Unit direction of the translation in world coordinates.
    pub axis: [f64; 3],
    /// Flip the direction with probability 1/2 when set.
    pub allow_negative: bool,
    /// Global seed; each sample derives its own stream from it.
    pub seed: u64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            translation_range: (0.8, 1.2),
            axis: [1.0, 0.0, 0.0],
            allow_negative: true,
            seed: 0,
        }
    }
}

impl MotionConfig {
    pub fn validate(&self) -> Result<()> {
        let (min, max) = self.translation_range;
        if !(min.is_finite() && max.is_finite() && 0.0 <= min && min <= max) {
            return Err(Error::InvalidParameter {
                name: "translation_range",
                value: min,
                range: "0 <= min <= max",
            });
        }
        let norm =
            (self.axis[0].powi(2) + self.axis[1].powi(2) + self.axis[2].powi(2)).sqrt();
        if !norm.is_finite() || (norm - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidAxis);
        }
        Ok(())
    }
}

/// One sampled camera move: the relative view matrix plus the draw that
/// produced it, so manifests can record the motion.
#[derive(Debug, Clone, Copy)]
pub struct SampledMotion {
    pub pose: SE3Pose,
    /// Signed translation magnitude along the configured axis, in meters.
    pub signed_magnitude: f64,
}

/// Draw a camera move for one sample. The pose is the view matrix of a
/// camera translated by `s·m·axis` in world space (m uniform in the
/// configured range, s ∈ {−1, +1} a fair coin when negatives are allowed),
/// which doubles as the relative transform from a source camera at the
/// world origin. Deterministic function of `(cfg.seed, sample_index)`.
pub fn sample_camera_motion(cfg: &MotionConfig, sample_index: u64) -> Result<SampledMotion> {
    cfg.validate()?;
    let mut rng = SplitMix64::for_stream(cfg.seed, sample_index);
    sample_camera_motion_with(cfg, &mut rng)
}

/// Like [`sample_camera_motion`] but drawing from a caller-owned generator,
/// for pipelines that sequence several draws per sample on one stream.
/// Draw order is fixed: magnitude first, then the direction coin.
pub fn sample_camera_motion_with(
    cfg: &MotionConfig,
    rng: &mut SplitMix64,
) -> Result<SampledMotion> {
    cfg.validate()?;
    let (min, max) = cfg.translation_range;
    let magnitude = rng.uniform(min, max);
    let sign = if cfg.allow_negative {
        if rng.next_bool() {
            -1.0
        } else {
            1.0
        }
    } else {
        1.0
    };
    let signed = sign * magnitude;
    let center = Vector3::new(cfg.axis[0], cfg.axis[1], cfg.axis[2]) * signed;
    Ok(SampledMotion {
        pose: SE3Pose::from_camera_center(center)?,
        signed_magnitude: signed,
    })
}

/// Synthesize the dense target-indexed flow induced by a rigid camera move
/// over a depth map.
///
/// For every source pixel with valid depth: back-project, transform by
/// `v_rel`, project, and splat to the nearest target pixel. Per target
/// pixel the record with minimum transformed depth wins; exact depth ties
/// keep the smaller source linear index. The correspondence grid stores the
/// winner's sub-pixel source coordinate — the target pixel center shifted
/// back by the winner's exact projected displacement — so the derived flow
/// `q − corr(q)` reproduces that displacement without rounding error.
/// Projections landing outside the target frame are dropped, not clamped.
///
/// An exactly-identity `v_rel` takes a dedicated path that emits bit-exact
/// zero flow and the identity grid; the floating-point round trip through
/// the camera would otherwise leave ~1e-13 dust in the flow.
pub fn synthesize_flow(
    depth: &DepthMap,
    intr: &Intrinsics,
    v_rel: &SE3Pose,
) -> Result<(FlowField, CorrespondenceGrid, ValidityMask)> {
    let (w, h) = (depth.width(), depth.height());
    if intr.width != w || intr.height != h {
        return Err(Error::DimensionMismatch {
            expected_width: w,
            expected_height: h,
            actual_width: intr.width,
            actual_height: intr.height,
        });
    }

    if v_rel.deviation_from_identity() == 0.0 {
        let mut valid = Vec::with_capacity(w * h);
        let mut corr = Vec::with_capacity(2 * w * h);
        for y in 0..h {
            for x in 0..w {
                let ok = depth.depth_at(x, y).is_some();
                valid.push(ok);
                if ok {
                    corr.push(x as f64);
                    corr.push(y as f64);
                } else {
                    corr.push(f64::NAN);
                    corr.push(f64::NAN);
                }
            }
        }
        let mask = ValidityMask::new(w, h, valid)?;
        let grid = CorrespondenceGrid::new(w, h, CoordinateSpace::Pixel, corr, mask.clone())?;
        let flow = FlowField::zeros(w, h, FlowIndexing::TargetIndexed)?;
        return Ok((flow, grid, mask));
    }

    // Z-buffer: per target pixel, the smallest transformed depth seen so
    // far and the winner's exact displacement. Source pixels are visited in
    // increasing linear index, so a strict less-than keeps the smaller
    // index on exact depth ties.
    let mut best_depth = vec![f64::INFINITY; w * h];
    let mut best_disp = vec![(0.0f64, 0.0f64); w * h];
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    for y in 0..h {
        for x in 0..w {
            let Some(d) = depth.depth_at(x, y) else {
                continue;
            };
            let point = intr
                .back_project(x as f64, y as f64, d)
                .expect("depth map guarantees positive depth");
            let moved = v_rel.transform_point(point);
            let Some(proj) = intr.project(moved) else {
                continue; // behind the target camera
            };
            let tx = proj.u.round();
            let ty = proj.v.round();
            if tx < 0.0 || ty < 0.0 || tx > max_x || ty > max_y {
                continue; // nearest pixel lies outside the target frame
            }
            let ti = ty as usize * w + tx as usize;
            if proj.depth < best_depth[ti] {
                best_depth[ti] = proj.depth;
                best_disp[ti] = (proj.u - x as f64, proj.v - y as f64);
            }
        }
    }

    let mut flow_data = Vec::with_capacity(2 * w * h);
    let mut corr_data = Vec::with_capacity(2 * w * h);
    let mut valid = Vec::with_capacity(w * h);
    for ty in 0..h {
        for tx in 0..w {
            let ti = ty * w + tx;
            if best_depth[ti].is_finite() {
                let (du, dv) = best_disp[ti];
                flow_data.push(du);
                flow_data.push(dv);
                corr_data.push(tx as f64 - du);
                corr_data.push(ty as f64 - dv);
                valid.push(true);
            } else {
                flow_data.push(0.0);
                flow_data.push(0.0);
                corr_data.push(f64::NAN);
                corr_data.push(f64::NAN);
                valid.push(false);
            }
        }
    }
    let mask = ValidityMask::new(w, h, valid)?;
    let grid = CorrespondenceGrid::new(w, h, CoordinateSpace::Pixel, corr_data, mask.clone())?;
    let flow = FlowField::new(w, h, FlowIndexing::TargetIndexed, flow_data)?;
    Ok((flow, grid, mask))
}

/// Output of [`reindex_flow`]: the re-gridded field plus its validity, and
/// a flag marking the degenerate request that needed no work.
#[derive(Debug, Clone)]
pub struct ReindexedFlow {
    pub flow: FlowField,
    pub valid: ValidityMask,
    /// True when the field already used the requested indexing and was
    /// passed through unchanged.
    pub was_noop: bool,
}

/// Re-grid a flow field between the source-indexed and target-indexed
/// conventions by splatting each valid vector to the rounded coordinate of
/// its other endpoint. Collisions keep the record whose exact endpoint is
/// nearest the receiving pixel; distance ties keep the smaller flow
/// magnitude, then the smaller donor linear index. Pixels receiving nothing
/// are invalid. Requesting the indexing the field already has is flagged as
/// a no-op rather than an error.
pub fn reindex_flow(
    flow: &FlowField,
    to: FlowIndexing,
    valid: &ValidityMask,
) -> Result<ReindexedFlow> {
    let (w, h) = (flow.width(), flow.height());
    if valid.width() != w || valid.height() != h {
        return Err(Error::DimensionMismatch {
            expected_width: w,
            expected_height: h,
            actual_width: valid.width(),
            actual_height: valid.height(),
        });
    }
    if flow.indexing() == to {
        return Ok(ReindexedFlow {
            flow: flow.clone(),
            valid: valid.clone(),
            was_noop: true,
        });
    }

    // Best record per receiving pixel: (squared endpoint distance, squared
    // flow magnitude, donor linear index) — lexicographically smaller wins.
    let mut best: Vec<Option<(f64, f64, usize, (f64, f64))>> = vec![None; w * h];
    let max_x = (w - 1) as f64;
    let max_y = (h - 1) as f64;
    for y in 0..h {
        for x in 0..w {
            if !valid.get(x, y) {
                continue;
            }
            let (u, v) = flow.uv(x, y);
            // A target-indexed vector points back to its source pixel; a
            // source-indexed vector points forward to its destination.
            let (ex, ey) = match to {
                FlowIndexing::SourceIndexed => (x as f64 - u, y as f64 - v),
                FlowIndexing::TargetIndexed => (x as f64 + u, y as f64 + v),
            };
            let rx = ex.round();
            let ry = ey.round();
            if rx < 0.0 || ry < 0.0 || rx > max_x || ry > max_y {
                continue;
            }
            let ri = ry as usize * w + rx as usize;
            let d2 = (ex - rx).powi(2) + (ey - ry).powi(2);
            let m2 = u * u + v * v;
            let donor = y * w + x;
            let candidate = (d2, m2, donor, (u, v));
            let take = match &best[ri] {
                None => true,
                Some((bd2, bm2, bdonor, _)) => {
                    (d2, m2, donor) < (*bd2, *bm2, *bdonor)
                }
            };
            if take {
                best[ri] = Some(candidate);
            }
        }
    }

    let mut data = Vec::with_capacity(2 * w * h);
    let mut mask = Vec::with_capacity(w * h);
    for slot in &best {
        match slot {
            Some((_, _, _, (u, v))) => {
                data.push(*u);
                data.push(*v);
                mask.push(true);
            }
            None => {
                data.push(0.0);
                data.push(0.0);
                mask.push(false);
            }
        }
    }
    Ok(ReindexedFlow {
        flow: FlowField::new(w, h, to, data)?,
        valid: ValidityMask::new(w, h, mask)?,
        was_noop: false,
    })
}

/// Independently invalidate each valid pixel with probability `rate`.
/// The decision for a pixel is a pure function of `(seed, linear index)`,
/// so the result does not depend on traversal or parallelization order.
pub fn drop_flow_points(
    flow: &FlowField,
    valid: &ValidityMask,
    rate: f64,
    seed: u64,
) -> Result<ValidityMask> {
    if !(rate.is_finite() && (0.0..=1.0).contains(&rate)) {
        return Err(Error::InvalidParameter {
            name: "rate",
            value: rate,
            range: "[0, 1]",
        });
    }
    let (w, h) = (flow.width(), flow.height());
    if valid.width() != w || valid.height() != h {
        return Err(Error::DimensionMismatch {
            expected_width: w,
            expected_height: h,
            actual_width: valid.width(),
            actual_height: valid.height(),
        });
    }
    let data = valid
        .data()
        .iter()
        .enumerate()
        .map(|(i, ok)| *ok && indexed_u01(seed, i as u64) >= rate)
        .collect();
    ValidityMask::new(w, h, data)
}

/// Convert a pixel-space correspondence grid to align-corners normalized
/// coordinates: `x_norm = 2x/(W−1) − 1`, likewise for y.
pub fn normalize_correspondence(grid: &CorrespondenceGrid) -> Result<CorrespondenceGrid> {
    if grid.space() != CoordinateSpace::Pixel {
        return Err(Error::CorrespondenceNotPixelSpace);
    }
    let (w, h) = (grid.width(), grid.height());
    if w < 2 || h < 2 {
        return Err(Error::DegenerateDimension {
            width: w,
            height: h,
            min: 2,
        });
    }
    let sx = 2.0 / (w - 1) as f64;
    let sy = 2.0 / (h - 1) as f64;
    let mut data = Vec::with_capacity(2 * w * h);
    for y in 0..h {
        for x in 0..w {
            match grid.coord(x, y) {
                Some((cx, cy)) => {
                    data.push(cx * sx - 1.0);
                    data.push(cy * sy - 1.0);
                }
                None => {
                    data.push(f64::NAN);
                    data.push(f64::NAN);
                }
            }
        }
    }
    CorrespondenceGrid::new(
        w,
        h,
        CoordinateSpace::NormalizedAlignCorners,
        data,
        grid.valid().clone(),
    )
}

/// Inverse of [`normalize_correspondence`]: back to pixel coordinates.
pub fn denormalize_correspondence(grid: &CorrespondenceGrid) -> Result<CorrespondenceGrid> {
    if grid.space() != CoordinateSpace::NormalizedAlignCorners {
        return Err(Error::CorrespondenceNotPixelSpace);
    }
    let (w, h) = (grid.width(), grid.height());
    if w < 2 || h < 2 {
        return Err(Error::DegenerateDimension {
            width: w,
            height: h,
            min: 2,
        });
    }
    let sx = (w - 1) as f64 / 2.0;
    let sy = (h - 1) as f64 / 2.0;
    let mut data = Vec::with_capacity(2 * w * h);
    for y in 0..h {
        for x in 0..w {
            match grid.coord(x, y) {
                Some((cx, cy)) => {
                    data.push((cx + 1.0) * sx);
                    data.push((cy + 1.0) * sy);
                }
                None => {
                    data.push(f64::NAN);
                    data.push(f64::NAN);
                }
            }
        }
    }
    CorrespondenceGrid::new(w, h, CoordinateSpace::Pixel, data, grid.valid().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn plane(w: usize, h: usize, z: f64) -> DepthMap {
        DepthMap::constant(w, h, z, 80.0).unwrap()
    }

    #[test]
    fn motion_degenerate_range_gives_exact_magnitude() {
        let cfg = MotionConfig {
            translation_range: (1.0, 1.0),
            allow_negative: false,
            ..MotionConfig::default()
        };
        for i in 0..50 {
            let m = sample_camera_motion(&cfg, i).unwrap();
            assert_eq!(m.signed_magnitude, 1.0);
        }
    }

    #[test]
    fn motion_draws_stay_in_range() {
        let cfg = MotionConfig::default();
        for i in 0..10_000 {
            let m = sample_camera_motion(&cfg, i).unwrap();
            let mag = m.signed_magnitude.abs();
            assert!((0.8..1.2).contains(&mag), "magnitude {mag} escaped");
        }
    }

    #[test]
    fn motion_is_deterministic_per_sample() {
        let cfg = MotionConfig {
            seed: 41,
            ..MotionConfig::default()
        };
        let a = sample_camera_motion(&cfg, 3).unwrap();
        let b = sample_camera_motion(&cfg, 3).unwrap();
        assert_eq!(a.signed_magnitude, b.signed_magnitude);
        assert_eq!(a.pose.translation(), b.pose.translation());
        let c = sample_camera_motion(&cfg, 4).unwrap();
        assert_ne!(a.signed_magnitude, c.signed_magnitude);
    }

    #[test]
    fn motion_uses_both_signs() {
        let cfg = MotionConfig::default();
        let signs: Vec<f64> = (0..100)
            .map(|i| sample_camera_motion(&cfg, i).unwrap().signed_magnitude.signum())
            .collect();
        assert!(signs.iter().any(|s| *s > 0.0));
        assert!(signs.iter().any(|s| *s < 0.0));
    }

    #[test]
    fn motion_rejects_bad_configs() {
        let cfg = MotionConfig {
            translation_range: (2.0, 1.0),
            ..MotionConfig::default()
        };
        assert!(sample_camera_motion(&cfg, 0).is_err());
        let cfg = MotionConfig {
            axis: [1.0, 1.0, 0.0],
            ..MotionConfig::default()
        };
        assert!(matches!(
            sample_camera_motion(&cfg, 0),
            Err(Error::InvalidAxis)
        ));
    }

    #[test]
    fn identity_motion_gives_zero_flow_everywhere() {
        let depth = plane(8, 6, 10.0);
        let intr = Intrinsics::from_fovy(60.0, 8, 6).unwrap();
        let (flow, grid, mask) =
            synthesize_flow(&depth, &intr, &SE3Pose::identity()).unwrap();
        assert_eq!(mask.count_valid(), 48);
        for y in 0..6 {
            for x in 0..8 {
                assert_eq!(flow.uv(x, y), (0.0, 0.0));
                assert_eq!(grid.coord(x, y), Some((x as f64, y as f64)));
            }
        }
    }

    #[test]
    fn identity_motion_respects_depth_holes() {
        let mut values = vec![5.0; 12];
        values[7] = 0.0;
        let depth = DepthMap::from_values(4, 3, values, 80.0).unwrap();
        let intr = Intrinsics::from_fovy(60.0, 4, 3).unwrap();
        let (_, grid, mask) =
            synthesize_flow(&depth, &intr, &SE3Pose::identity()).unwrap();
        assert_eq!(mask.count_valid(), 11);
        assert_eq!(grid.coord(3, 1), None);
    }

    #[test]
    fn constant_plane_translation_matches_closed_form() {
        // Every pixel of a fronto-parallel plane shifts by −fx·tx/z.
        let depth = plane(512, 512, 10.0);
        let intr = Intrinsics::from_fovy(29.2, 512, 512).unwrap();
        let motion = SE3Pose::from_camera_center(Vector3::new(1.0, 0.0, 0.0)).unwrap();
        let (flow, _, mask) = synthesize_flow(&depth, &intr, &motion).unwrap();
        let expected_u = -intr.fx * 1.0 / 10.0;
        assert_abs_diff_eq!(expected_u, -98.27991365949872, epsilon = 1e-9);
        assert!(mask.count_valid() > 0);
        for y in 0..512 {
            for x in 0..512 {
                if mask.get(x, y) {
                    let (u, v) = flow.uv(x, y);
                    assert_abs_diff_eq!(u, expected_u, epsilon = 1e-3);
                    assert_abs_diff_eq!(v, 0.0, epsilon = 1e-3);
                }
            }
        }
    }

    #[test]
    fn halving_depth_doubles_parallax() {
        let intr = Intrinsics::from_fovy(29.2, 64, 64).unwrap();
        let motion = SE3Pose::from_camera_center(Vector3::new(0.2, 0.0, 0.0)).unwrap();
        let mut magnitudes = Vec::new();
        for z in [20.0, 10.0] {
            let (flow, _, mask) = synthesize_flow(&plane(64, 64, z), &intr, &motion).unwrap();
            let (x, y) = (32, 32);
            assert!(mask.get(x, y));
            magnitudes.push(flow.uv(x, y).0.abs());
        }
        assert_abs_diff_eq!(magnitudes[1], 2.0 * magnitudes[0], epsilon = 1e-9);
    }

    #[test]
    fn all_invalid_depth_yields_all_invalid_outputs() {
        let depth = DepthMap::from_values(4, 4, vec![0.0; 16], 80.0).unwrap();
        let intr = Intrinsics::from_fovy(60.0, 4, 4).unwrap();
        let motion = SE3Pose::from_camera_center(Vector3::new(0.5, 0.0, 0.0)).unwrap();
        let (flow, grid, mask) = synthesize_flow(&depth, &intr, &motion).unwrap();
        assert_eq!(mask.count_valid(), 0);
        assert_eq!(grid.valid().count_valid(), 0);
        assert!(flow.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn near_plane_wins_the_z_buffer() {
        // Left half near (z=5), right half far (z=20); camera moves +0.5 m
        // along x with fx=100, so near content shifts −10 px and far −2.5.
        // Where both land on one target pixel the near depth must win.
        let w = 32;
        let h = 8;
        let values: Vec<f64> = (0..w * h)
            .map(|i| if i % w < w / 2 { 5.0 } else { 20.0 })
            .collect();
        let depth = DepthMap::from_values(w, h, values, 80.0).unwrap();
        let intr = Intrinsics::new(100.0, 100.0, w as f64 / 2.0, h as f64 / 2.0, w, h).unwrap();
        let motion = SE3Pose::from_camera_center(Vector3::new(0.5, 0.0, 0.0)).unwrap();
        let (flow, _, mask) = synthesize_flow(&depth, &intr, &motion).unwrap();
        let y = h / 2;
        // A near-plane source pixel x lands at x−10; far pixel x lands at
        // x−2.5 (rounds to x−2 or x−3). Target pixel 5 receives near pixel
        // 15 (15−10) and far-plane candidates around 7.5; near must win.
        assert!(mask.get(5, y));
        let (u, _) = flow.uv(5, y);
        assert_abs_diff_eq!(u, -10.0, epsilon = 1e-9);
        // Deep in the far half, far-plane flow survives.
        assert!(mask.get(25, y));
        let (u, _) = flow.uv(25, y);
        assert_abs_diff_eq!(u, -2.5, epsilon = 1e-9);
    }

    #[test]
    fn reindex_same_direction_is_flagged_noop() {
        let flow = FlowField::constant(4, 4, FlowIndexing::TargetIndexed, 1.0, 0.0).unwrap();
        let valid = ValidityMask::full(4, 4).unwrap();
        let out = reindex_flow(&flow, FlowIndexing::TargetIndexed, &valid).unwrap();
        assert!(out.was_noop);
        assert_eq!(out.flow, flow);
    }

    #[test]
    fn reindex_zero_flow_is_identity() {
        let flow = FlowField::zeros(5, 4, FlowIndexing::TargetIndexed).unwrap();
        let valid = ValidityMask::full(5, 4).unwrap();
        let out = reindex_flow(&flow, FlowIndexing::SourceIndexed, &valid).unwrap();
        assert!(!out.was_noop);
        assert_eq!(out.valid.count_valid(), 20);
        assert!(out.flow.data().iter().all(|v| *v == 0.0));
        assert_eq!(out.flow.indexing(), FlowIndexing::SourceIndexed);
    }

    #[test]
    fn reindex_constant_integer_flow_preserves_interior() {
        // Constant (−3, 0): target pixel q maps to source q+3; interior
        // source pixels receive exactly one record with the same vector.
        let flow = FlowField::constant(10, 3, FlowIndexing::TargetIndexed, -3.0, 0.0).unwrap();
        let valid = ValidityMask::full(10, 3).unwrap();
        let out = reindex_flow(&flow, FlowIndexing::SourceIndexed, &valid).unwrap();
        for y in 0..3 {
            for x in 0..10 {
                if x >= 3 {
                    assert!(out.valid.get(x, y), "({x},{y}) should receive a record");
                    assert_eq!(out.flow.uv(x, y), (-3.0, 0.0));
                } else {
                    assert!(!out.valid.get(x, y), "({x},{y}) has no target pixel");
                }
            }
        }
    }

    #[test]
    fn reindex_round_trips_on_interior_of_constant_field() {
        let flow = FlowField::constant(8, 8, FlowIndexing::TargetIndexed, 2.0, -1.0).unwrap();
        let valid = ValidityMask::full(8, 8).unwrap();
        let there = reindex_flow(&flow, FlowIndexing::SourceIndexed, &valid).unwrap();
        let back = reindex_flow(&there.flow, FlowIndexing::TargetIndexed, &there.valid).unwrap();
        for y in 0..8 {
            for x in 0..8 {
                if back.valid.get(x, y) {
                    assert_eq!(back.flow.uv(x, y), (2.0, -1.0));
                }
            }
        }
    }

    #[test]
    fn drop_rate_zero_and_one_are_exact() {
        let flow = FlowField::zeros(16, 16, FlowIndexing::TargetIndexed).unwrap();
        let valid = ValidityMask::full(16, 16).unwrap();
        let kept = drop_flow_points(&flow, &valid, 0.0, 7).unwrap();
        assert_eq!(kept, valid);
        let none = drop_flow_points(&flow, &valid, 1.0, 7).unwrap();
        assert_eq!(none.count_valid(), 0);
    }

    #[test]
    fn drop_rate_matches_binomial_expectation() {
        let n = 512;
        let flow = FlowField::zeros(n, n, FlowIndexing::TargetIndexed).unwrap();
        let valid = ValidityMask::full(n, n).unwrap();
        let out = drop_flow_points(&flow, &valid, 0.1, 2024).unwrap();
        let dropped = (n * n - out.count_valid()) as f64;
        let mean = 0.1 * (n * n) as f64;
        let sigma = ((n * n) as f64 * 0.1 * 0.9).sqrt();
        assert!(
            (dropped - mean).abs() < 3.0 * sigma,
            "dropped {dropped} vs expected {mean} ± {:.1}",
            3.0 * sigma
        );
    }

    #[test]
    fn drop_only_touches_valid_pixels() {
        let flow = FlowField::zeros(8, 8, FlowIndexing::TargetIndexed).unwrap();
        let mut mask = vec![false; 64];
        for (i, m) in mask.iter_mut().enumerate() {
            *m = i % 2 == 0;
        }
        let valid = ValidityMask::new(8, 8, mask).unwrap();
        let out = drop_flow_points(&flow, &valid, 0.5, 1).unwrap();
        for i in 0..64 {
            if !valid.data()[i] {
                assert!(!out.data()[i], "invalid pixel {i} must stay invalid");
            }
        }
    }

    #[test]
    fn normalize_corners_and_round_trip() {
        let grid = CorrespondenceGrid::identity(7, 5).unwrap();
        let norm = normalize_correspondence(&grid).unwrap();
        assert_eq!(norm.coord(0, 0), Some((-1.0, -1.0)));
        assert_eq!(norm.coord(6, 4), Some((1.0, 1.0)));
        let back = denormalize_correspondence(&norm).unwrap();
        for y in 0..5 {
            for x in 0..7 {
                let (bx, by) = back.coord(x, y).unwrap();
                assert_abs_diff_eq!(bx, x as f64, epsilon = 1e-12);
                assert_abs_diff_eq!(by, y as f64, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn normalize_rejects_degenerate_and_wrong_space() {
        let grid = CorrespondenceGrid::identity(1, 5).unwrap();
        assert!(matches!(
            normalize_correspondence(&grid),
            Err(Error::DegenerateDimension { .. })
        ));
        let grid = CorrespondenceGrid::identity(4, 4).unwrap();
        let norm = normalize_correspondence(&grid).unwrap();
        assert!(matches!(
            normalize_correspondence(&norm),
            Err(Error::CorrespondenceNotPixelSpace)
        ));
    }

    #[test]
    fn correspondence_rejects_nonfinite_valid_entries() {
        let valid = ValidityMask::full(2, 1).unwrap();
        let data = vec![0.0, 0.0, f64::NAN, 0.0];
        assert!(matches!(
            CorrespondenceGrid::new(2, 1, CoordinateSpace::Pixel, data, valid),
            Err(Error::NonFinite { .. })
        ));
    }
}
