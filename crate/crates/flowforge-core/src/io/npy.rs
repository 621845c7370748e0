//! NPY v1.0 export for flow fields and correspondence grids.
//!
//! Files are written as little-endian float32, C-order, shape `(H, W, 2)`;
//! a 3x2 field (three columns, two rows) declares shape `(2, 3, 2)`. The
//! header is space-padded so the payload starts on a 64-byte boundary,
//! matching what `numpy.save` produces. Export only — ingest formats are
//! `.flo` and KITTI PNG.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::FlowField;
use crate::synthesis::CorrespondenceGrid;

/// First eight bytes of every file we emit: `\x93NUMPY` then version 1.0.
pub const NPY_PREFIX: [u8; 8] = [0x93, 0x4E, 0x55, 0x4D, 0x50, 0x59, 0x01, 0x00];

const FORMAT: &str = "npy";

fn npy_bytes(width: usize, height: usize, values: impl Iterator<Item = f64>) -> Result<Vec<u8>> {
    let dict = format!(
        "{{'descr': '<f4', 'fortran_order': False, 'shape': ({height}, {width}, 2), }}"
    );
    // Pad with spaces, newline-terminated, so prefix + length field + header
    // is a multiple of 64 bytes.
    let unpadded = NPY_PREFIX.len() + 2 + dict.len() + 1;
    let pad = (64 - unpadded % 64) % 64;
    let header_len = dict.len() + pad + 1;
    let header_len_u16: u16 = header_len.try_into().map_err(|_| Error::BadDimensions {
        format: FORMAT,
        width: width as i64,
        height: height as i64,
    })?;

    let mut bytes = Vec::with_capacity(unpadded + pad + width * height * 8);
    bytes.extend_from_slice(&NPY_PREFIX);
    bytes.extend_from_slice(&header_len_u16.to_le_bytes());
    bytes.extend_from_slice(dict.as_bytes());
    bytes.extend(std::iter::repeat(b' ').take(pad));
    bytes.push(b'\n');
    debug_assert_eq!(bytes.len() % 64, 0);
    for value in values {
        bytes.extend_from_slice(&(value as f32).to_le_bytes());
    }
    Ok(bytes)
}

/// Writes `flow` to `path` as NPY, components in pixels.
pub fn write_npy_flow(path: &Path, flow: &FlowField) -> Result<()> {
    let bytes = npy_bytes(flow.width(), flow.height(), flow.data().iter().copied())?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Writes `flow` to `path` as NPY in normalized units: `u` is scaled by
/// `2 / (W - 1)` and `v` by `2 / (H - 1)`, so a displacement spanning the
/// full image measures 2.0 (the span of an align-corners axis).
pub fn write_npy_flow_normalized(path: &Path, flow: &FlowField) -> Result<()> {
    let (w, h) = (flow.width(), flow.height());
    if w < 2 || h < 2 {
        return Err(Error::DegenerateDimension {
            width: w,
            height: h,
            min: 2,
        });
    }
    let su = 2.0 / (w as f64 - 1.0);
    let sv = 2.0 / (h as f64 - 1.0);
    let scaled = flow
        .data()
        .iter()
        .enumerate()
        .map(|(i, &value)| if i % 2 == 0 { value * su } else { value * sv });
    let bytes = npy_bytes(w, h, scaled)?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Writes a correspondence grid to `path` as NPY. Invalid entries are
/// exported as NaN so downstream code can recover the hole set without a
/// side-channel mask.
pub fn write_npy_correspondence(path: &Path, grid: &CorrespondenceGrid) -> Result<()> {
    let (w, h) = (grid.width(), grid.height());
    let values = (0..h).flat_map(|y| {
        (0..w).flat_map(move |x| match grid.coord(x, y) {
            Some((cx, cy)) => [cx, cy],
            None => [f64::NAN, f64::NAN],
        })
    });
    let bytes = npy_bytes(w, h, values)?;
    fs::write(path, bytes)?;
    Ok(())
}
