//! `flowforge filter`: re-run the photometric consistency filter over an
//! existing dataset.
//!
//! For each triplet the second frame is compared against the first frame
//! backward-warped by the stored flow; pixels whose per-channel difference
//! exceeds the threshold Z are invalidated. `--z` rewrites every mask.png
//! in place, `--sweep` only reports valid fractions across Z in {20, 30,
//! 50}. Z = 255 accepts any 8-bit difference, so the mask degenerates to
//! pure warp validity.

use std::path::{Path, PathBuf};

use clap::Args;

use flowforge_core::filtering::{consistency_mask, FilterConfig};
use flowforge_core::io::{read_triplet, write_png_mask, MASK_NAME};
use flowforge_core::synthesis::reindex_flow;
use flowforge_core::warp::backward_warp_image;
use flowforge_core::{FlowField, FlowIndexing, ValidityMask};

use crate::error::{Context, RunError};

const SWEEP_THRESHOLDS: [f64; 3] = [20.0, 30.0, 50.0];

#[derive(Args, Debug, Clone)]
pub struct FilterArgs {
    /// Dataset directory containing triplet subdirectories.
    #[arg(long, value_name = "DIR")]
    pub dataset: PathBuf,

    /// Threshold Z to re-filter at; rewrites each sample's mask.png.
    #[arg(long, value_name = "Z", conflicts_with = "sweep")]
    pub z: Option<f64>,

    /// Report valid fractions for Z in {20, 30, 50} without rewriting.
    #[arg(long)]
    pub sweep: bool,

    /// Emit the report as JSON.
    #[arg(long)]
    pub json: bool,
}

pub fn run(args: &FilterArgs) -> Result<(), RunError> {
    let thresholds: Vec<f64> = if args.sweep {
        SWEEP_THRESHOLDS.to_vec()
    } else {
        match args.z {
            Some(z) if z.is_finite() && z >= 0.0 => vec![z],
            Some(z) => {
                return Err(RunError::usage(format!(
                    "z: must be a non-negative finite threshold, got {z}"
                )))
            }
            None => {
                return Err(RunError::usage(
                    "pass either --z <THRESHOLD> to rewrite masks or --sweep to report only",
                ))
            }
        }
    };
    let rewrite = !args.sweep;

    let samples = list_samples(&args.dataset)?;
    // rows[t] collects (name, valid count, pixel count) for thresholds[t].
    let mut rows: Vec<Vec<(String, usize, usize)>> = vec![Vec::new(); thresholds.len()];
    for (name, dir) in &samples {
        let record = read_triplet(dir).context(format!("reading triplet {name}"))?;

        // Reconstruct the target-grid view of the stored flow.
        let (tflow, tvalid) = match record.flow.indexing() {
            FlowIndexing::TargetIndexed => (record.flow.clone(), record.mask.clone()),
            FlowIndexing::SourceIndexed => {
                let r = reindex_flow(&record.flow, FlowIndexing::TargetIndexed, &record.mask)
                    .context(format!("reindexing {name}"))?;
                (r.flow, r.valid)
            }
        };
        let (warped, warp_ok) = backward_warp_image(&record.frame_t, &tflow)
            .context(format!("warping {name}"))?;
        let warp_valid = intersect(&tvalid, &warp_ok)?;

        for (t, &z) in thresholds.iter().enumerate() {
            let cfg = FilterConfig::with_threshold(z);
            let cmask = consistency_mask(&record.frame_t1, &warped, &warp_valid, &cfg)
                .context(format!("filtering {name}"))?;
            if rewrite {
                let new_mask = match record.flow.indexing() {
                    FlowIndexing::TargetIndexed => cmask.clone(),
                    // A source vector survives iff the target cell it lands
                    // in is photometrically consistent.
                    FlowIndexing::SourceIndexed => {
                        pull_back_mask(&record.flow, &record.mask, &cmask)?
                    }
                };
                let path = dir.join(MASK_NAME);
                write_png_mask(&path, &new_mask)
                    .context(format!("rewriting mask for {name}"))?;
                rows[t].push((name.clone(), new_mask.count_valid(), pixel_count(&new_mask)));
            } else {
                rows[t].push((name.clone(), cmask.count_valid(), pixel_count(&cmask)));
            }
        }
    }

    if args.json {
        println!("{}", report_json(&thresholds, &rows, rewrite));
    } else {
        print!("{}", report_text(&thresholds, &rows, rewrite));
    }
    Ok(())
}

fn pixel_count(mask: &ValidityMask) -> usize {
    mask.width() * mask.height()
}

fn list_samples(root: &Path) -> Result<Vec<(String, PathBuf)>, RunError> {
    let entries = std::fs::read_dir(root)
        .context(format!("reading dataset directory {}", root.display()))?;
    let mut samples = Vec::new();
    for entry in entries {
        let entry = entry.context(format!("reading dataset directory {}", root.display()))?;
        let path = entry.path();
        if path.is_dir() && path.join(flowforge_core::io::FLOW_NAME).is_file() {
            samples.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    samples.sort();
    if samples.is_empty() {
        return Err(RunError::integrity(format!(
            "no triplet directories found in {}",
            root.display()
        )));
    }
    Ok(samples)
}

fn intersect(a: &ValidityMask, b: &ValidityMask) -> Result<ValidityMask, RunError> {
    let (w, h) = (a.width(), a.height());
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            data.push(a.get(x, y) && b.get(x, y));
        }
    }
    Ok(ValidityMask::new(w, h, data)?)
}

/// Map a target-grid consistency verdict back onto a source-indexed mask:
/// keep a stored source vector only when the target cell it splats to
/// (nearest-pixel rounding of p + F(p)) passed the consistency test.
fn pull_back_mask(
    flow: &FlowField,
    stored: &ValidityMask,
    target_verdict: &ValidityMask,
) -> Result<ValidityMask, RunError> {
    let (w, h) = (flow.width(), flow.height());
    let mut data = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            if !stored.get(x, y) {
                data.push(false);
                continue;
            }
            let (u, v) = flow.uv(x, y);
            let tx = (x as f64 + u).round();
            let ty = (y as f64 + v).round();
            let inside =
                tx >= 0.0 && ty >= 0.0 && (tx as usize) < w && (ty as usize) < h;
            data.push(inside && target_verdict.get(tx as usize, ty as usize));
        }
    }
    Ok(ValidityMask::new(w, h, data)?)
}

fn report_text(
    thresholds: &[f64],
    rows: &[Vec<(String, usize, usize)>],
    rewrote: bool,
) -> String {
    let mut out = String::new();
    for (t, &z) in thresholds.iter().enumerate() {
        let mut valid = 0usize;
        let mut total = 0usize;
        for (name, v, n) in &rows[t] {
            out.push_str(&format!(
                "{name} z={z} valid_fraction={:.6}\n",
                *v as f64 / (*n).max(1) as f64
            ));
            valid += v;
            total += n;
        }
        out.push_str(&format!(
            "aggregate z={z} valid_fraction={:.6}\n",
            valid as f64 / total.max(1) as f64
        ));
    }
    if rewrote {
        out.push_str("masks rewritten in place\n");
    }
    out
}

fn report_json(
    thresholds: &[f64],
    rows: &[Vec<(String, usize, usize)>],
    rewrote: bool,
) -> String {
    let mut blocks = Vec::new();
    for (t, &z) in thresholds.iter().enumerate() {
        let mut valid = 0usize;
        let mut total = 0usize;
        let samples: Vec<String> = rows[t]
            .iter()
            .map(|(name, v, n)| {
                valid += v;
                total += n;
                format!(
                    "{{\"name\":\"{name}\",\"valid_fraction\":{}}}",
                    *v as f64 / (*n).max(1) as f64
                )
            })
            .collect();
        blocks.push(format!(
            "{{\"z\":{z},\"samples\":[{}],\"aggregate_valid_fraction\":{}}}",
            samples.join(","),
            valid as f64 / total.max(1) as f64
        ));
    }
    format!(
        "{{\"rewrote_masks\":{rewrote},\"thresholds\":[{}]}}",
        blocks.join(",")
    )
}
