//! `flowforge viz`: render flow fields and triplets for eyeballing.
//!
//! A `.flo` file or KITTI 16-bit flow PNG becomes a color-wheel image; a
//! triplet directory becomes a three-panel strip: first frame, second
//! frame, then the flow coloring with invalid pixels dimmed to dark gray.
//! Zero flow renders white; hue encodes direction and saturation encodes
//! magnitude relative to `--max-magnitude` (default: the field's robust
//! maximum).

use std::path::{Path, PathBuf};

use clap::Args;

use flowforge_core::io::{flow_to_color, read_flo, read_kitti_png, read_triplet, write_png_image};
use flowforge_core::{FlowField, Image, ValidityMask};

use crate::error::{Context, RunError};

/// Intensity used for pixels whose flow is invalid.
const INVALID_GRAY: f64 = 40.0;

#[derive(Args, Debug, Clone)]
pub struct VizArgs {
    /// A .flo file, a KITTI 16-bit flow PNG, or a triplet directory.
    #[arg(value_name = "INPUT")]
    pub input: PathBuf,

    /// Output PNG path [default: derived from the input].
    #[arg(short, long, value_name = "FILE")]
    pub out: Option<PathBuf>,

    /// Normalize saturation against this magnitude instead of the field's
    /// robust maximum; flows at or beyond it render fully saturated.
    #[arg(long, value_name = "PX", allow_hyphen_values = true)]
    pub max_magnitude: Option<f64>,
}

pub fn run(args: &VizArgs) -> Result<(), RunError> {
    let (panel, default_out) = if args.input.is_dir() {
        let out = args.input.join("viz.png");
        (triplet_panel(&args.input, args.max_magnitude)?, out)
    } else {
        let (flow, valid) = load_flow_file(&args.input)?;
        let out = args.input.with_extension("viz.png");
        (colorized(&flow, valid.as_ref(), args.max_magnitude)?, out)
    };
    let out = args.out.clone().unwrap_or(default_out);
    write_png_image(&out, &panel).context(format!("writing {}", out.display()))?;
    println!("wrote {}", out.display());
    Ok(())
}

fn load_flow_file(path: &Path) -> Result<(FlowField, Option<ValidityMask>), RunError> {
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("flo") => {
            let flow = read_flo(path).context(format!("reading {}", path.display()))?;
            Ok((flow, None))
        }
        Some("png") => {
            let (flow, valid) =
                read_kitti_png(path).context(format!("reading {}", path.display()))?;
            Ok((flow, Some(valid)))
        }
        _ => Err(RunError::usage(format!(
            "viz input must be a .flo file, a KITTI flow .png, or a triplet directory, got {}",
            path.display()
        ))),
    }
}

/// Color the flow and dim invalid pixels.
fn colorized(
    flow: &FlowField,
    valid: Option<&ValidityMask>,
    max_magnitude: Option<f64>,
) -> Result<Image, RunError> {
    if let Some(m) = max_magnitude {
        if !(m.is_finite() && m > 0.0) {
            return Err(RunError::usage(format!(
                "max_magnitude: must be a positive finite number, got {m}"
            )));
        }
    }
    let mut color = flow_to_color(flow, max_magnitude)?;
    if let Some(mask) = valid {
        let (w, h) = (color.width(), color.height());
        let mut data = Vec::with_capacity(w * h * 3);
        for y in 0..h {
            for x in 0..w {
                if mask.get(x, y) {
                    data.extend_from_slice(color.pixel(x, y));
                } else {
                    data.extend_from_slice(&[INVALID_GRAY; 3]);
                }
            }
        }
        color = Image::new(w, h, 3, data)?;
    }
    Ok(color)
}

/// Three panels side by side: frame_t, frame_t1, flow color. Exactly
/// 3W x H pixels, RGB.
fn triplet_panel(dir: &Path, max_magnitude: Option<f64>) -> Result<Image, RunError> {
    let record = read_triplet(dir).context(format!("reading triplet {}", dir.display()))?;
    let frame_t = to_rgb(&record.frame_t)?;
    let frame_t1 = to_rgb(&record.frame_t1)?;
    let flow_panel = colorized(&record.flow, Some(&record.mask), max_magnitude)?;

    let (w, h) = (frame_t.width(), frame_t.height());
    let mut data = Vec::with_capacity(3 * w * h * 3);
    for y in 0..h {
        for panel in [&frame_t, &frame_t1, &flow_panel] {
            for x in 0..w {
                data.extend_from_slice(panel.pixel(x, y));
            }
        }
    }
    Ok(Image::new(3 * w, h, 3, data)?)
}

fn to_rgb(image: &Image) -> Result<Image, RunError> {
    if image.channels() == 3 {
        return Ok(image.clone());
    }
    let (w, h) = (image.width(), image.height());
    let mut data = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            let value = image.pixel(x, y)[0];
            data.extend_from_slice(&[value; 3]);
        }
    }
    Ok(Image::new(w, h, 3, data)?)
}
