//! Middlebury `.flo` flow files.
//!
//! Layout, all little-endian: the magic float `202021.25` (bytes `PIEH`),
//! width as `i32`, height as `i32`, then `width * height` interleaved
//! `(u, v)` pairs as `f32`, row-major from the top-left pixel. A 1x1 field
//! is exactly 20 bytes.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{FlowField, FlowIndexing};

/// Magic bytes: `202021.25f32` in little-endian order, spelling `PIEH`.
pub const FLO_MAGIC: [u8; 4] = [0x50, 0x49, 0x45, 0x48];

const FORMAT: &str = "flo";

/// Largest pixel count we are willing to allocate for when reading. Guards
/// against hostile headers claiming absurd dimensions.
const MAX_PIXELS: u64 = 1 << 28;

/// Writes `flow` to `path` in `.flo` layout.
///
/// The format carries no indexing metadata, so the field's indexing tag is
/// not stored; pair the file with external metadata when the convention
/// matters (triplet directories do this).
pub fn write_flo(path: &Path, flow: &FlowField) -> Result<()> {
    let (w, h) = (flow.width(), flow.height());
    if w > i32::MAX as usize || h > i32::MAX as usize {
        return Err(Error::BadDimensions {
            format: FORMAT,
            width: w as i64,
            height: h as i64,
        });
    }
    let mut bytes = Vec::with_capacity(12 + w * h * 8);
    bytes.extend_from_slice(&FLO_MAGIC);
    bytes.extend_from_slice(&(w as i32).to_le_bytes());
    bytes.extend_from_slice(&(h as i32).to_le_bytes());
    for &value in flow.data() {
        bytes.extend_from_slice(&(value as f32).to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a `.flo` file.
///
/// The returned field is tagged [`FlowIndexing::SourceIndexed`], the
/// Middlebury convention (the vector at pixel `p` of the first frame points
/// to its match in the second). Retag with
/// [`FlowField::with_indexing`] when the producer used the opposite
/// convention.
pub fn read_flo(path: &Path) -> Result<FlowField> {
    let bytes = fs::read(path)?;
    decode_flo(&bytes)
}

/// Decodes `.flo` bytes already in memory. See [`read_flo`].
pub fn decode_flo(bytes: &[u8]) -> Result<FlowField> {
    if bytes.len() < 4 {
        return Err(Error::Truncated {
            format: FORMAT,
            expected: 12,
            actual: bytes.len() as u64,
        });
    }
    if bytes[0..4] != FLO_MAGIC {
        return Err(Error::BadMagic {
            format: FORMAT,
            found: bytes[0..4].to_vec(),
        });
    }
    if bytes.len() < 12 {
        return Err(Error::Truncated {
            format: FORMAT,
            expected: 12,
            actual: bytes.len() as u64,
        });
    }
    let w = i32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let h = i32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if w <= 0 || h <= 0 || (w as u64) * (h as u64) > MAX_PIXELS {
        return Err(Error::BadDimensions {
            format: FORMAT,
            width: w as i64,
            height: h as i64,
        });
    }
    let (w, h) = (w as usize, h as usize);
    let expected = 12 + 8 * (w as u64) * (h as u64);
    if (bytes.len() as u64) < expected {
        return Err(Error::Truncated {
            format: FORMAT,
            expected,
            actual: bytes.len() as u64,
        });
    }
    if bytes.len() as u64 > expected {
        return Err(Error::BadHeader {
            format: FORMAT,
            detail: format!(
                "{} trailing bytes after the pixel payload",
                bytes.len() as u64 - expected
            ),
        });
    }
    let mut data = Vec::with_capacity(w * h * 2);
    for chunk in bytes[12..].chunks_exact(4) {
        let value = f32::from_le_bytes(chunk.try_into().unwrap());
        if !value.is_finite() {
            return Err(Error::NonFinite {
                what: "flow component in .flo payload",
            });
        }
        data.push(value as f64);
    }
    FlowField::new(w, h, FlowIndexing::SourceIndexed, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::FlowField;
    use tempfile::tempdir;

    #[test]
    fn magic_is_pieh_and_encodes_202021_25() {
        assert_eq!(&FLO_MAGIC, b"PIEH");
        assert_eq!(f32::from_le_bytes(FLO_MAGIC), 202021.25);
    }

    #[test]
    fn one_by_one_field_is_exactly_twenty_bytes() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("tiny.flo");
        let flow =
            FlowField::new(1, 1, FlowIndexing::SourceIndexed, vec![1.5, -2.0]).unwrap();
        write_flo(&path, &flow).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 20);
        assert_eq!(&bytes[0..4], b"PIEH");
        assert_eq!(i32::from_le_bytes(bytes[4..8].try_into().unwrap()), 1);
        assert_eq!(i32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(f32::from_le_bytes(bytes[12..16].try_into().unwrap()), 1.5);
        assert_eq!(f32::from_le_bytes(bytes[16..20].try_into().unwrap()), -2.0);
    }

    #[test]
    fn round_trip_preserves_f32_exact_values() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("field.flo");
        // Values chosen to be exactly representable in f32 so the f64 ->
        // f32 -> f64 trip is lossless.
        let flow = FlowField::from_fn(7, 5, FlowIndexing::TargetIndexed, |x, y| {
            (x as f64 * 0.25 - 3.0, y as f64 * 0.5 + 1.75)
        })
        .unwrap();
        write_flo(&path, &flow).unwrap();
        let back = read_flo(&path).unwrap();
        assert_eq!(back.width(), 7);
        assert_eq!(back.height(), 5);
        // The format does not store indexing; readers default to source.
        assert_eq!(back.indexing(), FlowIndexing::SourceIndexed);
        assert_eq!(back.data(), flow.data());
    }

    #[test]
    fn bad_magic_is_reported_with_found_bytes() {
        let mut bytes = vec![0u8; 20];
        bytes[0..4].copy_from_slice(b"PIEx");
        match decode_flo(&bytes) {
            Err(Error::BadMagic { format, found }) => {
                assert_eq!(format, "flo");
                assert_eq!(found, b"PIEx");
            }
            other => panic!("expected BadMagic, got {other:?}"),
        }
    }

    #[test]
    fn truncation_is_detected_at_header_and_payload() {
        // Too short for the header at all.
        assert!(matches!(
            decode_flo(&FLO_MAGIC[0..3]),
            Err(Error::Truncated { .. })
        ));
        // Header claims 2x2 but payload holds a single pixel.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&FLO_MAGIC);
        bytes.extend_from_slice(&2i32.to_le_bytes());
        bytes.extend_from_slice(&2i32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 8]);
        match decode_flo(&bytes) {
            Err(Error::Truncated {
                expected, actual, ..
            }) => {
                assert_eq!(expected, 12 + 8 * 4);
                assert_eq!(actual, 20);
            }
            other => panic!("expected Truncated, got {other:?}"),
        }
    }

    #[test]
    fn nonpositive_and_absurd_dimensions_are_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&FLO_MAGIC);
        bytes.extend_from_slice(&(-3i32).to_le_bytes());
        bytes.extend_from_slice(&2i32.to_le_bytes());
        assert!(matches!(
            decode_flo(&bytes),
            Err(Error::BadDimensions { width: -3, .. })
        ));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(&FLO_MAGIC);
        bytes.extend_from_slice(&i32::MAX.to_le_bytes());
        bytes.extend_from_slice(&i32::MAX.to_le_bytes());
        assert!(matches!(
            decode_flo(&bytes),
            Err(Error::BadDimensions { .. })
        ));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let flow =
            FlowField::new(1, 1, FlowIndexing::SourceIndexed, vec![0.0, 0.0]).unwrap();
        let dir = tempdir().unwrap();
        let path = dir.path().join("pad.flo");
        write_flo(&path, &flow).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        assert!(matches!(decode_flo(&bytes), Err(Error::BadHeader { .. })));
    }

    #[test]
    fn non_finite_payload_is_rejected() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&FLO_MAGIC);
        bytes.extend_from_slice(&1i32.to_le_bytes());
        bytes.extend_from_slice(&1i32.to_le_bytes());
        bytes.extend_from_slice(&f32::NAN.to_le_bytes());
        bytes.extend_from_slice(&0.0f32.to_le_bytes());
        assert!(matches!(decode_flo(&bytes), Err(Error::NonFinite { .. })));
    }
}
