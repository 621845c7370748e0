//! 8-bit PNG ingest and export for images and validity masks.
//!
//! Images are 8-bit grayscale or RGB; writing rounds and clamps the
//! real-valued `[0, 255]` intensities to bytes, so integer-valued images
//! round-trip exactly. Masks are 8-bit grayscale with valid = 255 and
//! invalid = 0; any nonzero byte reads back as valid.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use image::{DynamicImage, ImageFormat, ImageReader};

use crate::error::{Error, Result};
use crate::raster::{Image, ValidityMask};

const FORMAT: &str = "png";

/// Writes `image` to `path` as 8-bit grayscale (1 channel) or RGB
/// (3 channels), rounding and clamping each intensity.
pub fn write_png_image(path: &Path, image: &Image) -> Result<()> {
    let (w, h) = (image.width() as u32, image.height() as u32);
    let to_byte = |v: f64| v.round().clamp(0.0, 255.0) as u8;
    let dynamic = match image.channels() {
        1 => {
            let buf = image::ImageBuffer::<image::Luma<u8>, Vec<u8>>::from_fn(w, h, |x, y| {
                image::Luma([to_byte(image.at(x as usize, y as usize, 0))])
            });
            DynamicImage::ImageLuma8(buf)
        }
        3 => {
            let buf = image::ImageBuffer::<image::Rgb<u8>, Vec<u8>>::from_fn(w, h, |x, y| {
                let p = image.pixel(x as usize, y as usize);
                image::Rgb([to_byte(p[0]), to_byte(p[1]), to_byte(p[2])])
            });
            DynamicImage::ImageRgb8(buf)
        }
        channels => return Err(Error::InvalidChannelCount { channels }),
    };
    let mut writer = BufWriter::new(File::create(path)?);
    dynamic.write_to(&mut writer, ImageFormat::Png)?;
    Ok(())
}

/// Reads an 8-bit grayscale or RGB PNG. Other pixel formats (alpha,
/// 16-bit, palette expansions that do not decode to Luma8/Rgb8) are
/// rejected with [`Error::UnsupportedPixelFormat`].
pub fn read_png_image(path: &Path) -> Result<Image> {
    let dynamic = ImageReader::open(path)?
        .with_guessed_format()?
        .decode()?;
    match dynamic {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let data = buf.into_raw().into_iter().map(|b| b as f64).collect();
            Image::new(w, h, 1, data)
        }
        DynamicImage::ImageRgb8(buf) => {
            let (w, h) = (buf.width() as usize, buf.height() as usize);
            let data = buf.into_raw().into_iter().map(|b| b as f64).collect();
            Image::new(w, h, 3, data)
        }
        other => Err(Error::UnsupportedPixelFormat {
            format: FORMAT,
            detail: format!("expected 8-bit gray or RGB, found {other:?}"),
        }),
    }
}

/// Writes `mask` to `path` as an 8-bit grayscale PNG, valid = 255.
pub fn write_png_mask(path: &Path, mask: &ValidityMask) -> Result<()> {
    let (w, h) = (mask.width() as u32, mask.height() as u32);
    let buf = image::ImageBuffer::<image::Luma<u8>, Vec<u8>>::from_fn(w, h, |x, y| {
        image::Luma([if mask.get(x as usize, y as usize) { 255 } else { 0 }])
    });
    let mut writer = BufWriter::new(File::create(path)?);
    DynamicImage::ImageLuma8(buf).write_to(&mut writer, ImageFormat::Png)?;
    Ok(())
}

/// Reads an 8-bit grayscale PNG as a validity mask; nonzero bytes are
/// valid.
pub fn read_png_mask(path: &Path) -> Result<ValidityMask> {
    let dynamic = ImageReader::open(path)?
        .with_guessed_format()?
        .decode()?;
    let buf = match dynamic {
        DynamicImage::ImageLuma8(buf) => buf,
        other => {
            return Err(Error::UnsupportedPixelFormat {
                format: FORMAT,
                detail: format!("mask must be 8-bit gray, found {other:?}"),
            });
        }
    };
    let (w, h) = (buf.width() as usize, buf.height() as usize);
    let data = buf.into_raw().into_iter().map(|b| b != 0).collect();
    ValidityMask::new(w, h, data)
}
