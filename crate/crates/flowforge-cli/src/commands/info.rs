//! `flowforge info`: protocol constants, format facts, and file inspection.
//!
//! With no argument it prints the dataset protocol (defaults, formats,
//! exit codes) so the numbers live in exactly one place — the config
//! module — and the printout can never drift from behavior. With a path it
//! describes what the file or triplet directory holds.

use std::path::Path;

use clap::Args;

use flowforge_core::io::{read_flo, read_kitti_png, read_pfm_image, read_png_image, read_triplet};
use flowforge_core::{FlowField, ValidityMask};

use crate::config::{
    ALT_FOVY_DEG, DEFAULT_DROPOUT, DEFAULT_FOVY_DEG, DEFAULT_MAX_DEPTH, DEFAULT_N_SAMPLES,
    DEFAULT_SIZE, DEFAULT_T_MAX, DEFAULT_T_MIN, DEFAULT_WORKERS, DEFAULT_Z_THRESHOLD,
    SEED_ENV_VAR,
};
use crate::error::{Context, RunError};

#[derive(Args, Debug, Clone)]
pub struct InfoArgs {
    /// File or triplet directory to describe [default: print the protocol].
    #[arg(value_name = "PATH")]
    pub path: Option<std::path::PathBuf>,
}

pub fn run(args: &InfoArgs) -> Result<(), RunError> {
    match &args.path {
        None => {
            print!("{}", protocol_text());
            Ok(())
        }
        Some(path) => {
            print!("{}", describe(path)?);
            Ok(())
        }
    }
}

fn protocol_text() -> String {
    format!(
        "flowforge {}\n\
         protocol defaults:\n\
         \x20 n_samples    {DEFAULT_N_SAMPLES}\n\
         \x20 size         {DEFAULT_SIZE} px\n\
         \x20 fovy         {DEFAULT_FOVY_DEG} deg (alternative {ALT_FOVY_DEG})\n\
         \x20 max_depth    {DEFAULT_MAX_DEPTH} m\n\
         \x20 translation  U({DEFAULT_T_MIN}, {DEFAULT_T_MAX}) m along x, sign flipped with p=1/2\n\
         \x20 z_threshold  {DEFAULT_Z_THRESHOLD} intensity levels\n\
         \x20 dropout      {DEFAULT_DROPOUT}\n\
         \x20 indexing     source\n\
         \x20 workers      {DEFAULT_WORKERS}\n\
         seed: --seed flag, else the seed config key, else ${SEED_ENV_VAR}, else 0\n\
         formats:\n\
         \x20 flow.flo     magic \"PIEH\" (f32 202021.25 LE), i32 width/height, f32 (u,v) pairs\n\
         \x20 KITTI PNG    16-bit RGB; stored = round(64*v + 32768); blue channel nonzero marks valid\n\
         \x20 NPY          v1.0 header, dtype <f4, C order, shape (H, W, 2)\n\
         \x20 PFM          \"PF\"/\"Pf\" magic, negative scale = little-endian, rows bottom-up\n\
         exit codes: 0 ok, 1 usage, 2 I/O, 3 data integrity\n",
        env!("CARGO_PKG_VERSION")
    )
}

fn describe(path: &Path) -> Result<String, RunError> {
    if path.is_dir() {
        return describe_triplet(path);
    }
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase());
    match ext.as_deref() {
        Some("flo") => {
            let flow = read_flo(path).context(format!("reading {}", path.display()))?;
            let (mean, max) = magnitude_stats(&flow, None);
            Ok(format!(
                "flo {}x{} ({} indexing assumed)\n  flow mean |v| {:.3} px, max |v| {:.3} px\n",
                flow.width(),
                flow.height(),
                flow.indexing().tag(),
                mean,
                max
            ))
        }
        Some("png") => describe_png(path),
        Some("pfm") => {
            let image = read_pfm_image(path).context(format!("reading {}", path.display()))?;
            Ok(format!(
                "pfm {}x{}, {} channel(s)\n",
                image.width(),
                image.height(),
                image.channels()
            ))
        }
        _ => Err(RunError::usage(format!(
            "don't know how to describe {} (expected .flo, .png, .pfm, or a triplet directory)",
            path.display()
        ))),
    }
}

fn describe_png(path: &Path) -> Result<String, RunError> {
    // A 16-bit RGB PNG is a KITTI flow map; anything else is a plain image.
    if let Ok((flow, valid)) = read_kitti_png(path) {
        let (mean, max) = magnitude_stats(&flow, Some(&valid));
        return Ok(format!(
            "KITTI flow PNG {}x{}\n  valid {:.2}% of pixels\n  flow mean |v| {:.3} px, max |v| {:.3} px (over valid pixels)\n",
            flow.width(),
            flow.height(),
            100.0 * valid.valid_fraction(),
            mean,
            max
        ));
    }
    let image = read_png_image(path).context(format!("reading {}", path.display()))?;
    Ok(format!(
        "png {}x{}, {} channel(s)\n",
        image.width(),
        image.height(),
        image.channels()
    ))
}

fn describe_triplet(dir: &Path) -> Result<String, RunError> {
    let record = read_triplet(dir).context(format!("reading triplet {}", dir.display()))?;
    let (mean, max) = magnitude_stats(&record.flow, Some(&record.mask));
    Ok(format!(
        "triplet {}\n\
         \x20 size         {}x{}\n\
         \x20 frames       {} channel(s)\n\
         \x20 indexing     {}\n\
         \x20 seed         {} (sample_index {})\n\
         \x20 tx           {} m\n\
         \x20 fovy         {} deg\n\
         \x20 z_threshold  {}\n\
         \x20 valid        {:.2}% of pixels\n\
         \x20 flow         mean |v| {:.3} px, max |v| {:.3} px (over valid pixels)\n",
        dir.display(),
        record.frame_t.width(),
        record.frame_t.height(),
        record.frame_t.channels(),
        record.meta.indexing.tag(),
        record.meta.seed,
        record.meta.sample_index,
        record.meta.tx,
        record.meta.fovy,
        record.meta.z_threshold,
        100.0 * record.mask.valid_fraction(),
        mean,
        max
    ))
}

/// Mean and max flow magnitude, optionally restricted to valid pixels.
/// Returns zeros when nothing is in scope.
fn magnitude_stats(flow: &FlowField, valid: Option<&ValidityMask>) -> (f64, f64) {
    let mut sum = 0.0;
    let mut max = 0.0f64;
    let mut count = 0usize;
    for y in 0..flow.height() {
        for x in 0..flow.width() {
            if valid.is_some_and(|m| !m.get(x, y)) {
                continue;
            }
            let (u, v) = flow.uv(x, y);
            let mag = (u * u + v * v).sqrt();
            sum += mag;
            max = max.max(mag);
            count += 1;
        }
    }
    if count == 0 {
        (0.0, 0.0)
    } else {
        (sum / count as f64, max)
    }
}
