//! Deterministic fixture builders shared by the criterion benches.
//!
//! Every builder is seeded, so consecutive bench runs measure the same
//! workload: a sloped and rippled depth field, a banded texture with a
//! little noise on top, and the protocol's typical 1 m sideways motion.

use flowforge_core::camera::{Intrinsics, SE3Pose};
use flowforge_core::raster::{DepthMap, FeatureMap, Image};
use flowforge_core::rng::SplitMix64;
use nalgebra::Vector3;

/// A full synthesis scene at `size` x `size`: depth, intrinsics, pose, and
/// the frame to be warped.
pub fn scene(size: usize) -> (DepthMap, Intrinsics, SE3Pose, Image) {
    let depth = sloped_depth(size);
    let intr = Intrinsics::from_fovy(29.2, size, size).unwrap();
    let pose = SE3Pose::from_camera_center(Vector3::new(1.0, 0.0, 0.0)).unwrap();
    let image = textured_image(size, 0xBE7C_0001);
    (depth, intr, pose, image)
}

/// Fully valid depth in roughly [5, 18] m: a slope with a sinusoidal ripple,
/// so the splat produces realistic occlusion patterns instead of a uniform
/// shift.
pub fn sloped_depth(size: usize) -> DepthMap {
    let mut values = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let base = 6.0 + 10.0 * (x as f64 / size as f64) + 1.5 * (y as f64 / size as f64);
            let ripple = 0.8 * (x as f64 * 0.07).sin() * (y as f64 * 0.05).cos();
            values.push(base + ripple);
        }
    }
    DepthMap::from_values(size, size, values, 80.0).unwrap()
}

/// Three-channel banded texture with seeded noise, values in [0, 255].
pub fn textured_image(size: usize, seed: u64) -> Image {
    let mut rng = SplitMix64::new(seed);
    Image::from_fn(size, size, 3, |x, y, c| {
        let band = 127.5
            + 70.0 * ((x as f64 * 0.041 + c as f64).sin())
            + 35.0 * ((y as f64 * 0.033).cos());
        (band + rng.uniform(-12.0, 12.0)).clamp(0.0, 255.0)
    })
    .unwrap()
}

/// Seeded feature map for the attention benches.
pub fn random_features(width: usize, height: usize, channels: usize, seed: u64) -> FeatureMap {
    let mut rng = SplitMix64::new(seed);
    let data: Vec<f64> = (0..width * height * channels)
        .map(|_| rng.uniform(-1.0, 1.0))
        .collect();
    FeatureMap::new(width, height, channels, data).unwrap()
}
