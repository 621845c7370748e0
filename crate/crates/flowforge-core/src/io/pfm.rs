//! PFM (portable float map) image and depth ingest.
//!
//! Header: magic `PF` (3-channel) or `Pf` (1-channel), then width, height,
//! and a scale factor, each separated by whitespace, with exactly one
//! whitespace byte between the scale and the payload. A negative scale
//! marks the payload little-endian, positive big-endian; the magnitude is
//! ignored. Pixel rows are stored bottom-up, left to right.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{DepthMap, Image};

const FORMAT: &str = "pfm";

/// Largest pixel count we are willing to allocate for when reading.
const MAX_PIXELS: u64 = 1 << 28;

fn is_pfm_whitespace(b: u8) -> bool {
    matches!(b, b' ' | b'\t' | b'\n' | b'\r' | 0x0b | 0x0c)
}

/// Pulls the next whitespace-delimited token starting at `pos`, returning
/// the token and the index one past it.
fn next_token(bytes: &[u8], mut pos: usize) -> Result<(&[u8], usize)> {
    while pos < bytes.len() && is_pfm_whitespace(bytes[pos]) {
        pos += 1;
    }
    let start = pos;
    while pos < bytes.len() && !is_pfm_whitespace(bytes[pos]) {
        pos += 1;
    }
    if start == pos {
        return Err(Error::BadHeader {
            format: FORMAT,
            detail: "missing header token".to_string(),
        });
    }
    Ok((&bytes[start..pos], pos))
}

struct RawPfm {
    width: usize,
    height: usize,
    channels: usize,
    /// Top-down, row-major, channel-interleaved samples.
    data: Vec<f64>,
}

fn decode_pfm(bytes: &[u8]) -> Result<RawPfm> {
    let (magic, pos) = next_token(bytes, 0)?;
    let channels = match magic {
        b"PF" => 3,
        b"Pf" => 1,
        other => {
            return Err(Error::BadMagic {
                format: FORMAT,
                found: other[..other.len().min(4)].to_vec(),
            });
        }
    };
    let (w_tok, pos) = next_token(bytes, pos)?;
    let (h_tok, pos) = next_token(bytes, pos)?;
    let (scale_tok, pos) = next_token(bytes, pos)?;
    let parse_dim = |tok: &[u8]| -> i64 {
        std::str::from_utf8(tok)
            .ok()
            .and_then(|s| s.parse::<i64>().ok())
            .unwrap_or(-1)
    };
    let (w, h) = (parse_dim(w_tok), parse_dim(h_tok));
    if w <= 0 || h <= 0 || (w as u64) * (h as u64) > MAX_PIXELS {
        return Err(Error::BadDimensions {
            format: FORMAT,
            width: w,
            height: h,
        });
    }
    let scale: f64 = std::str::from_utf8(scale_tok)
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::BadHeader {
            format: FORMAT,
            detail: "unparseable scale factor".to_string(),
        })?;
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::BadHeader {
            format: FORMAT,
            detail: format!("scale factor {scale} has no endianness sign"),
        });
    }
    let little_endian = scale < 0.0;
    // Exactly one whitespace byte separates the scale from the payload.
    if pos >= bytes.len() || !is_pfm_whitespace(bytes[pos]) {
        return Err(Error::BadHeader {
            format: FORMAT,
            detail: "missing separator before payload".to_string(),
        });
    }
    let payload = &bytes[pos + 1..];
    let (w, h) = (w as usize, h as usize);
    let sample_count = w * h * channels;
    let expected = (sample_count * 4) as u64;
    if (payload.len() as u64) < expected {
        return Err(Error::Truncated {
            format: FORMAT,
            expected: expected + (pos as u64) + 1,
            actual: bytes.len() as u64,
        });
    }
    if payload.len() as u64 > expected {
        return Err(Error::BadHeader {
            format: FORMAT,
            detail: format!(
                "{} trailing bytes after the pixel payload",
                payload.len() as u64 - expected
            ),
        });
    }
    // Rows are stored bottom-up; flip to top-down while decoding.
    let mut data = vec![0.0f64; sample_count];
    let row_samples = w * channels;
    for file_row in 0..h {
        let image_row = h - 1 - file_row;
        for i in 0..row_samples {
            let offset = (file_row * row_samples + i) * 4;
            let raw: [u8; 4] = payload[offset..offset + 4].try_into().unwrap();
            let value = if little_endian {
                f32::from_le_bytes(raw)
            } else {
                f32::from_be_bytes(raw)
            };
            data[image_row * row_samples + i] = value as f64;
        }
    }
    Ok(RawPfm {
        width: w,
        height: h,
        channels,
        data,
    })
}

fn encode_pfm(
    width: usize,
    height: usize,
    channels: usize,
    data: &[f64],
) -> Vec<u8> {
    let magic = if channels == 3 { "PF" } else { "Pf" };
    let mut bytes = format!("{magic}\n{width} {height}\n-1.0\n").into_bytes();
    let row_samples = width * channels;
    for image_row in (0..height).rev() {
        for i in 0..row_samples {
            let value = data[image_row * row_samples + i] as f32;
            bytes.extend_from_slice(&value.to_le_bytes());
        }
    }
    bytes
}

/// Reads a PFM file as an image on the `[0, 255]` intensity scale.
///
/// Samples are interpreted as intensities on that scale directly and are
/// clipped into it; non-finite samples are rejected.
pub fn read_pfm_image(path: &Path) -> Result<Image> {
    let bytes = fs::read(path)?;
    let raw = decode_pfm(&bytes)?;
    if raw.data.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "PFM image sample",
        });
    }
    let clipped = raw.data.iter().map(|v| v.clamp(0.0, 255.0)).collect();
    Image::new(raw.width, raw.height, raw.channels, clipped)
}

/// Reads a single-channel PFM file as a depth map in meters.
///
/// Non-positive and non-finite samples become invalid pixels; values above
/// `max_depth` are clamped to it, matching [`DepthMap::from_values`].
pub fn read_pfm_depth(path: &Path, max_depth: f64) -> Result<DepthMap> {
    let bytes = fs::read(path)?;
    let raw = decode_pfm(&bytes)?;
    if raw.channels != 1 {
        return Err(Error::UnsupportedPixelFormat {
            format: FORMAT,
            detail: "depth must be single-channel (magic 'Pf')".to_string(),
        });
    }
    DepthMap::from_values(raw.width, raw.height, raw.data, max_depth)
}

/// Writes `image` as a little-endian PFM file (scale `-1.0`).
pub fn write_pfm_image(path: &Path, image: &Image) -> Result<()> {
    let bytes = encode_pfm(image.width(), image.height(), image.channels(), image.data());
    fs::write(path, bytes)?;
    Ok(())
}

/// Writes `depth` as a little-endian single-channel PFM file. Invalid
/// pixels are written as `0.0`, which reads back as invalid.
pub fn write_pfm_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let (w, h) = (depth.width(), depth.height());
    let mut data = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            if let Some(d) = depth.depth_at(x, y) {
                data[y * w + x] = d;
            }
        }
    }
    let bytes = encode_pfm(w, h, 1, &data);
    fs::write(path, bytes)?;
    Ok(())
}
