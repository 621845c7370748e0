//! KITTI-style 16-bit PNG flow files.
//!
//! Each pixel stores three 16-bit channels: `R = round(u * 64 + 32768)`,
//! `G = round(v * 64 + 32768)` (both clamped to `[0, 65535]`), and
//! `B = 1` for valid pixels. Invalid pixels are written as `(0, 0, 0)`.
//! Decoding inverts the affine map, so a round trip moves each component
//! by at most half the quantization step, `1/128` of a pixel.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader, Rgb};

use crate::error::{Error, Result};
use crate::raster::{FlowField, FlowIndexing, ValidityMask};

const FORMAT: &str = "kitti-png";

/// Largest representable component magnitude. `|u| >= 512` would leave the
/// 16-bit range, so encoding rejects it rather than quietly clamping the
/// value to a different flow.
pub const KITTI_MAX_COMPONENT: f64 = 512.0;

fn encode_component(value: f64) -> u16 {
    let stored = (value * 64.0 + 32768.0).round();
    stored.clamp(0.0, 65535.0) as u16
}

/// Writes `flow` to `path` as a KITTI 16-bit RGB PNG, marking pixels
/// invalid where `valid` is false.
///
/// Fails with [`Error::FlowMagnitudeOverflow`] if any valid pixel has a
/// component with `|c| >= 512`; invalid pixels are exempt because they are
/// written as `(0, 0, 0)` regardless of their stored value.
pub fn write_kitti_png(path: &Path, flow: &FlowField, valid: &ValidityMask) -> Result<()> {
    if flow.width() != valid.width() || flow.height() != valid.height() {
        return Err(Error::DimensionMismatch {
            expected_width: flow.width(),
            expected_height: flow.height(),
            actual_width: valid.width(),
            actual_height: valid.height(),
        });
    }
    let (w, h) = (flow.width(), flow.height());
    let mut max_abs = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            if valid.get(x, y) {
                let (u, v) = flow.uv(x, y);
                max_abs = max_abs.max(u.abs()).max(v.abs());
            }
        }
    }
    if max_abs >= KITTI_MAX_COMPONENT {
        return Err(Error::FlowMagnitudeOverflow {
            max_abs,
            limit: KITTI_MAX_COMPONENT,
        });
    }
    let mut buf = image::ImageBuffer::<Rgb<u16>, Vec<u16>>::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let pixel = if valid.get(x, y) {
                let (u, v) = flow.uv(x, y);
                Rgb([encode_component(u), encode_component(v), 1])
            } else {
                Rgb([0, 0, 0])
            };
            buf.put_pixel(x as u32, y as u32, pixel);
        }
    }
    let mut writer = BufWriter::new(File::create(path)?);
    DynamicImage::ImageRgb16(buf).write_to(&mut writer, ImageFormat::Png)?;
    Ok(())
}

/// Reads a KITTI 16-bit RGB PNG flow file.
///
/// Returns the decoded field (tagged [`FlowIndexing::SourceIndexed`], the
/// KITTI convention) and its validity mask. Invalid pixels decode to
/// `(0, 0)`. Any PNG that is not 16-bit RGB is rejected with
/// [`Error::UnsupportedPixelFormat`].
pub fn read_kitti_png(path: &Path) -> Result<(FlowField, ValidityMask)> {
    let dynamic = ImageReader::open(path)?
        .with_guessed_format()?
        .decode()?;
    let buf = match dynamic {
        DynamicImage::ImageRgb16(buf) => buf,
        other => {
            return Err(Error::UnsupportedPixelFormat {
                format: FORMAT,
                detail: format!("expected 16-bit RGB, found {other:?}"),
            });
        }
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    if w == 0 || h == 0 {
        return Err(Error::BadDimensions {
            format: FORMAT,
            width: w as i64,
            height: h as i64,
        });
    }
    let mut mask = ValidityMask::empty(w, h)?;
    let mut flow = FlowField::zeros(w, h, FlowIndexing::SourceIndexed)?;
    for y in 0..h {
        for x in 0..w {
            let Rgb([ru, rv, rb]) = *buf.get_pixel(x as u32, y as u32);
            if rb != 0 {
                let u = (ru as f64 - 32768.0) / 64.0;
                let v = (rv as f64 - 32768.0) / 64.0;
                flow.set(x, y, u, v);
                mask.set(x, y, true);
            }
        }
    }
    Ok((flow, mask))
}
