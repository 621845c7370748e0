//! `flowforge eval`: compare a predicted dataset against ground truth.
//!
//! Two kinds of comparison: `--kind flow` reports endpoint error and the
//! Fl-all outlier rate; `--kind images` reports PSNR and SSIM over the
//! second frames. Samples are matched by name — triplet directories by
//! directory name, loose `.flo`/`.png` files by file stem. Ground-truth
//! samples with no prediction are listed, warned about on stderr, and
//! excluded from the aggregate.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;

use flowforge_core::io::{read_flo, read_png_image, read_triplet};
use flowforge_core::metrics::{flow_metrics, image_metrics, FlowMetrics, ImageMetrics};
use flowforge_core::{Error as CoreError, FlowField, Image, ValidityMask};

use crate::error::{Context, RunError};

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    /// Predicted dataset: triplet directories or loose files.
    #[arg(long, value_name = "DIR")]
    pub pred: PathBuf,

    /// Ground-truth dataset.
    #[arg(long, value_name = "DIR")]
    pub gt: PathBuf,

    /// What to compare: "flow" (EPE, Fl-all) or "images" (PSNR, SSIM).
    #[arg(long, value_name = "KIND", default_value = "flow")]
    pub kind: String,

    /// Validity mask for flow comparisons: gt, pred, both, or none.
    /// Image comparisons are always full-frame.
    #[arg(long, value_name = "POLICY", default_value = "gt")]
    pub mask: String,

    /// Emit the report as JSON instead of text.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EvalKind {
    Flow,
    Images,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum MaskPolicy {
    Gt,
    Pred,
    Both,
    None,
}

/// Where a named sample's data lives.
#[derive(Debug, Clone)]
enum Source {
    Triplet(PathBuf),
    Loose(PathBuf),
}

/// Flow plus the validity/indexing sidecars a triplet carries. Loose .flo
/// files have neither: they evaluate as fully valid, source-indexed.
struct FlowSample {
    flow: FlowField,
    mask: Option<ValidityMask>,
}

pub fn run(args: &EvalArgs) -> Result<(), RunError> {
    let kind = match args.kind.to_ascii_lowercase().as_str() {
        "flow" => EvalKind::Flow,
        "images" => EvalKind::Images,
        other => {
            return Err(RunError::usage(format!(
                "kind: expected \"flow\" or \"images\", got {other:?}"
            )))
        }
    };
    let policy = match args.mask.to_ascii_lowercase().as_str() {
        "gt" => MaskPolicy::Gt,
        "pred" => MaskPolicy::Pred,
        "both" => MaskPolicy::Both,
        "none" => MaskPolicy::None,
        other => {
            return Err(RunError::usage(format!(
                "mask: expected gt, pred, both, or none, got {other:?}"
            )))
        }
    };

    let gt_samples = discover(&args.gt, kind)?;
    let pred_samples = discover(&args.pred, kind)?;
    if gt_samples.is_empty() {
        return Err(RunError::integrity(format!(
            "no ground-truth samples found in {}",
            args.gt.display()
        )));
    }

    let mut report = Report::new(kind);
    for (name, gt_source) in &gt_samples {
        let Some(pred_source) = pred_samples.get(name) else {
            eprintln!("warning: no prediction for {name}; excluded from the aggregate");
            report.missing.push(name.clone());
            continue;
        };
        match kind {
            EvalKind::Flow => {
                let gt = load_flow(gt_source).context(format!("ground truth {name}"))?;
                let pred = load_flow(pred_source).context(format!("prediction {name}"))?;
                if pred.flow.indexing() != gt.flow.indexing() {
                    return Err(RunError::integrity(format!(
                        "{name}: indexing mismatch: prediction is {}-indexed, ground truth is {}-indexed",
                        pred.flow.indexing().tag(),
                        gt.flow.indexing().tag()
                    )));
                }
                let valid = combined_mask(&gt, &pred, policy)
                    .context(format!("mask for {name}"))?;
                match flow_metrics(&pred.flow, &gt.flow, &valid) {
                    Ok(metrics) => report.flow.push((name.clone(), metrics)),
                    Err(CoreError::EmptyValidSet) => {
                        eprintln!(
                            "warning: {name}: no valid pixels under mask policy; excluded"
                        );
                        report.missing.push(name.clone());
                    }
                    Err(e) => return Err(RunError::from(e)).context(format!("evaluating {name}")),
                }
            }
            EvalKind::Images => {
                let gt = load_image(gt_source).context(format!("ground truth {name}"))?;
                let pred = load_image(pred_source).context(format!("prediction {name}"))?;
                let metrics =
                    image_metrics(&pred, &gt).context(format!("evaluating {name}"))?;
                report.images.push((name.clone(), metrics));
            }
        }
    }

    if report.evaluated() == 0 {
        return Err(RunError::integrity(
            "no samples were evaluated (every ground-truth sample was missing or empty)",
        ));
    }
    if args.json {
        println!("{}", report.to_json());
    } else {
        print!("{}", report.to_text());
    }
    Ok(())
}

/// Map sample names to their data locations. Triplet directories win over
/// loose files of the same name.
fn discover(root: &Path, kind: EvalKind) -> Result<BTreeMap<String, Source>, RunError> {
    let entries = std::fs::read_dir(root)
        .context(format!("reading dataset directory {}", root.display()))?;
    let mut samples = BTreeMap::new();
    let mut loose = Vec::new();
    for entry in entries {
        let entry = entry.context(format!("reading dataset directory {}", root.display()))?;
        let path = entry.path();
        if path.is_dir() {
            let marker = match kind {
                EvalKind::Flow => path.join(flowforge_core::io::FLOW_NAME),
                EvalKind::Images => path.join(flowforge_core::io::FRAME_T1_NAME),
            };
            if marker.is_file() {
                let name = entry.file_name().to_string_lossy().into_owned();
                samples.insert(name, Source::Triplet(path));
            }
        } else if path.is_file() {
            let wanted = match kind {
                EvalKind::Flow => "flo",
                EvalKind::Images => "png",
            };
            let matches = path
                .extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case(wanted));
            if matches {
                if let Some(stem) = path.file_stem() {
                    loose.push((stem.to_string_lossy().into_owned(), path));
                }
            }
        }
    }
    for (name, path) in loose {
        samples.entry(name).or_insert(Source::Loose(path));
    }
    Ok(samples)
}

fn load_flow(source: &Source) -> Result<FlowSample, RunError> {
    match source {
        Source::Triplet(dir) => {
            let record = read_triplet(dir)?;
            Ok(FlowSample {
                flow: record.flow,
                mask: Some(record.mask),
            })
        }
        Source::Loose(path) => Ok(FlowSample {
            flow: read_flo(path)?,
            mask: None,
        }),
    }
}

fn load_image(source: &Source) -> Result<Image, RunError> {
    match source {
        Source::Triplet(dir) => {
            Ok(read_png_image(&dir.join(flowforge_core::io::FRAME_T1_NAME))?)
        }
        Source::Loose(path) => Ok(read_png_image(path)?),
    }
}

fn combined_mask(
    gt: &FlowSample,
    pred: &FlowSample,
    policy: MaskPolicy,
) -> Result<ValidityMask, RunError> {
    let (w, h) = (gt.flow.width(), gt.flow.height());
    let full = || ValidityMask::full(w, h).map_err(RunError::from);
    let gt_mask = || -> Result<ValidityMask, RunError> {
        gt.mask.clone().map_or_else(full, Ok)
    };
    let pred_mask = || -> Result<ValidityMask, RunError> {
        pred.mask.clone().map_or_else(full, Ok)
    };
    match policy {
        MaskPolicy::None => full(),
        MaskPolicy::Gt => gt_mask(),
        MaskPolicy::Pred => pred_mask(),
        MaskPolicy::Both => {
            let a = gt_mask()?;
            let b = pred_mask()?;
            if a.width() != b.width() || a.height() != b.height() {
                return Err(RunError::integrity(format!(
                    "mask dimensions disagree: {}x{} vs {}x{}",
                    a.width(),
                    a.height(),
                    b.width(),
                    b.height()
                )));
            }
            let mut data = Vec::with_capacity(w * h);
            for y in 0..h {
                for x in 0..w {
                    data.push(a.get(x, y) && b.get(x, y));
                }
            }
            Ok(ValidityMask::new(w, h, data)?)
        }
    }
}

struct Report {
    kind: EvalKind,
    flow: Vec<(String, FlowMetrics)>,
    images: Vec<(String, ImageMetrics)>,
    missing: Vec<String>,
}

impl Report {
    fn new(kind: EvalKind) -> Self {
        Self {
            kind,
            flow: Vec::new(),
            images: Vec::new(),
            missing: Vec::new(),
        }
    }

    fn evaluated(&self) -> usize {
        self.flow.len() + self.images.len()
    }

    /// Pixel-weighted flow aggregate: identical to pooling every evaluated
    /// pixel into one set before taking the means.
    fn flow_aggregate(&self) -> FlowMetrics {
        let mut epe_sum = 0.0;
        let mut fl_sum = 0.0;
        let mut pixels = 0usize;
        for (_, m) in &self.flow {
            epe_sum += m.epe * m.evaluated_pixels as f64;
            fl_sum += m.fl_all * m.evaluated_pixels as f64;
            pixels += m.evaluated_pixels;
        }
        let n = pixels.max(1) as f64;
        FlowMetrics {
            epe: epe_sum / n,
            fl_all: fl_sum / n,
            evaluated_pixels: pixels,
        }
    }

    /// Sample-mean image aggregate; any infinite PSNR (identical pair)
    /// makes the aggregate infinite, which is the honest answer.
    fn image_aggregate(&self) -> ImageMetrics {
        let n = self.images.len().max(1) as f64;
        ImageMetrics {
            psnr: self.images.iter().map(|(_, m)| m.psnr).sum::<f64>() / n,
            ssim: self.images.iter().map(|(_, m)| m.ssim).sum::<f64>() / n,
        }
    }

    fn to_text(&self) -> String {
        // to_kv is one key per line; fold it onto the sample's line.
        let flat = |kv: String| kv.trim_end().replace('\n', " ");
        let mut out = String::new();
        match self.kind {
            EvalKind::Flow => {
                for (name, m) in &self.flow {
                    out.push_str(&format!("{name} {}\n", flat(m.to_kv())));
                }
                out.push_str(&format!("aggregate {}\n", flat(self.flow_aggregate().to_kv())));
            }
            EvalKind::Images => {
                for (name, m) in &self.images {
                    out.push_str(&format!("{name} {}\n", flat(m.to_kv())));
                }
                out.push_str(&format!(
                    "aggregate {}\n",
                    flat(self.image_aggregate().to_kv())
                ));
            }
        }
        for name in &self.missing {
            out.push_str(&format!("missing {name}\n"));
        }
        out
    }

    fn to_json(&self) -> String {
        let mut samples = Vec::new();
        match self.kind {
            EvalKind::Flow => {
                for (name, m) in &self.flow {
                    samples.push(merge_name(name, &m.to_json()));
                }
            }
            EvalKind::Images => {
                for (name, m) in &self.images {
                    samples.push(merge_name(name, &m.to_json()));
                }
            }
        }
        let aggregate = match self.kind {
            EvalKind::Flow => self.flow_aggregate().to_json(),
            EvalKind::Images => self.image_aggregate().to_json(),
        };
        let missing: Vec<String> = self.missing.iter().map(|n| json_string(n)).collect();
        format!(
            "{{\"kind\":{},\"samples\":[{}],\"aggregate\":{},\"missing\":[{}]}}",
            json_string(match self.kind {
                EvalKind::Flow => "flow",
                EvalKind::Images => "images",
            }),
            samples.join(","),
            aggregate,
            missing.join(",")
        )
    }
}

/// Prepend a "name" field to a one-level JSON object like `{"epe":1.0}`.
fn merge_name(name: &str, object: &str) -> String {
    debug_assert!(object.starts_with('{'));
    format!("{{\"name\":{},{}", json_string(name), &object[1..])
}

fn json_string(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len() + 2);
    out.push('"');
    for c in raw.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}
