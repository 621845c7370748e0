//! `flowforge synth`: manufacture (frame, flow, frame') triplets.
//!
//! Every sample is a pure function of `(seed, sample_index)`: the frame
//! pick, the camera move, and the dropout pattern all come from per-sample
//! RNG streams, so output bytes are identical for any worker count and any
//! scheduling order.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use flowforge_core::camera::{Intrinsics, SE3Pose};
use flowforge_core::filtering::{consistency_mask, FilterConfig};
use flowforge_core::io::{
    read_pfm_depth, read_pfm_image, read_png_image, write_kitti_png, write_npy_flow,
    write_npy_flow_normalized, write_triplet, TripletMeta, TripletRecord,
};
use flowforge_core::render::{fill_holes_nearest, fuse, fusion_weights, render_next_frame, FusionParams};
use flowforge_core::rng::{stream_seed, SplitMix64};
use flowforge_core::synthesis::{
    drop_flow_points, reindex_flow, sample_camera_motion, synthesize_flow, SampledMotion,
};
use flowforge_core::{center_crop_resize, center_crop_resize_depth, FlowIndexing, Image};

use crate::config::SynthConfig;
use crate::error::{Context, RunError};

/// Steepness of the fusion gate. High enough that rendered pixels keep
/// their exact values (the gate saturates), while holes fall back to the
/// filled estimate.
const FUSION_GAIN: f64 = 40.0;
const FUSION_KERNEL: usize = 3;

pub const MANIFEST_NAME: &str = "manifest.txt";

pub fn run(cfg: &SynthConfig) -> Result<(), RunError> {
    let frames = list_frames(&cfg.frames)?;
    std::fs::create_dir_all(&cfg.out)
        .with_context_path("creating output directory", &cfg.out)?;

    let indices: Vec<u64> = (0..cfg.n_samples).collect();
    let lines: Vec<String> = if cfg.workers == 1 {
        indices
            .iter()
            .map(|&i| process_sample(cfg, &frames, i))
            .collect::<Result<_, _>>()?
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| RunError::usage(format!("workers: {e}")))?;
        pool.install(|| {
            indices
                .par_iter()
                .map(|&i| process_sample(cfg, &frames, i))
                .collect::<Result<_, _>>()
        })?
    };

    let manifest_path = cfg.out.join(MANIFEST_NAME);
    let mut manifest = String::new();
    manifest.push_str("# flowforge synth manifest\n");
    // The worker count is deliberately absent: outputs are byte-identical
    // across worker counts, manifest included.
    manifest.push_str(&format!(
        "# seed={} n_samples={} size={} fovy={} max_depth={} t_min={} t_max={} \
         axis={},{},{} allow_negative={} z_threshold={} dropout={} indexing={} \
         identity_motion={}\n",
        cfg.seed,
        cfg.n_samples,
        cfg.size,
        cfg.fovy,
        cfg.max_depth,
        cfg.t_min,
        cfg.t_max,
        cfg.axis[0],
        cfg.axis[1],
        cfg.axis[2],
        cfg.allow_negative,
        cfg.z_threshold,
        cfg.dropout,
        cfg.indexing.tag(),
        cfg.identity_motion,
    ));
    for line in &lines {
        manifest.push_str(line);
        manifest.push('\n');
    }
    std::fs::write(&manifest_path, manifest)
        .with_context_path("writing manifest", &manifest_path)?;

    let skipped = lines.iter().filter(|l| l.contains(" status=skip ")).count();
    println!(
        "synthesized {} sample(s) ({} skipped) in {} ({})",
        lines.len() - skipped,
        skipped,
        cfg.out.display(),
        MANIFEST_NAME
    );
    Ok(())
}

/// All frame files in the input directory, sorted by file name so indexing
/// is stable across platforms and runs.
fn list_frames(dir: &Path) -> Result<Vec<PathBuf>, RunError> {
    let entries = std::fs::read_dir(dir).with_context_path("reading frames directory", dir)?;
    let mut frames: Vec<PathBuf> = Vec::new();
    for entry in entries {
        let entry = entry.with_context_path("reading frames directory", dir)?;
        let path = entry.path();
        if !path.is_file() {
            continue;
        }
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("png") || ext.eq_ignore_ascii_case("pfm") => {
                frames.push(path);
            }
            _ => {}
        }
    }
    frames.sort_by_key(|p| p.file_name().map(|n| n.to_owned()));
    if frames.is_empty() {
        return Err(RunError::integrity(format!(
            "no input frames (.png or .pfm) found in {}",
            dir.display()
        )));
    }
    Ok(frames)
}

fn load_frame(path: &Path) -> Result<Image, RunError> {
    let is_pfm = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
    let image = if is_pfm {
        read_pfm_image(path)
    } else {
        read_png_image(path)
    };
    image.with_context_path("reading frame", path)
}

/// Synthesize one triplet and return its manifest line.
fn process_sample(cfg: &SynthConfig, frames: &[PathBuf], index: u64) -> Result<String, RunError> {
    // Per-sample streams. The base stream drives the camera move inside
    // sample_camera_motion; the auxiliary sub-stream covers every other
    // draw this sample makes, in a fixed order: frame pick, then dropout.
    let base_stream = stream_seed(cfg.seed, index);
    let mut aux = SplitMix64::for_stream(base_stream, 1);

    let frame_path = &frames[aux.next_index(frames.len())];
    let dropout_seed = aux.next_u64();
    let frame_name = frame_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    let stem = frame_path
        .file_stem()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();

    let depth_path = cfg.depths.join(format!("{stem}.pfm"));
    if !depth_path.is_file() {
        return Ok(format!(
            "sample={index:06} status=skip reason=missing_depth frame={frame_name}"
        ));
    }

    let frame = load_frame(frame_path)?;
    let depth = read_pfm_depth(&depth_path, cfg.max_depth)
        .with_context_path("reading depth", &depth_path)?;
    if frame.width() != depth.width() || frame.height() != depth.height() {
        return Err(RunError::integrity(format!(
            "frame {frame_name}: depth map is {}x{} but the frame is {}x{}",
            depth.width(),
            depth.height(),
            frame.width(),
            frame.height()
        )));
    }

    let frame = center_crop_resize(&frame, cfg.size).context(format!("frame {frame_name}"))?;
    let depth =
        center_crop_resize_depth(&depth, cfg.size).context(format!("depth for {frame_name}"))?;
    let intr = Intrinsics::from_fovy(cfg.fovy, cfg.size, cfg.size)
        .context("camera intrinsics")?;

    let motion = if cfg.identity_motion {
        SampledMotion {
            pose: SE3Pose::identity(),
            signed_magnitude: 0.0,
        }
    } else {
        sample_camera_motion(&cfg.motion_config(), index).context("sampling camera motion")?
    };

    let (flow, corr, _synth_mask) =
        synthesize_flow(&depth, &intr, &motion.pose).context(format!("sample {index:06}"))?;
    let rendered =
        render_next_frame(&frame, &corr).context(format!("rendering sample {index:06}"))?;
    let filled = fill_holes_nearest(&rendered).context(format!("filling sample {index:06}"))?;

    let in_channels = 2 * frame.channels() + 1;
    let params = FusionParams::mask_gate(FUSION_KERNEL, in_channels, FUSION_GAIN)
        .context("fusion parameters")?;
    let weights = fusion_weights(&filled, rendered.image(), rendered.coverage(), &params)
        .context(format!("fusing sample {index:06}"))?;
    let frame_t1 =
        fuse(&filled, rendered.image(), &weights).context(format!("fusing sample {index:06}"))?;

    // Validity: geometrically covered, photometrically consistent at Z,
    // then randomly thinned by the dropout rate.
    let filter_cfg = FilterConfig::with_threshold(cfg.z_threshold);
    let consistent = consistency_mask(&frame_t1, rendered.image(), rendered.coverage(), &filter_cfg)
        .context(format!("filtering sample {index:06}"))?;
    // coverage is warp-validity restricted to splatted pixels, so the
    // consistency mask is already contained in the synthesis mask; dropout
    // only thins it further.
    let kept = drop_flow_points(&flow, &consistent, cfg.dropout, dropout_seed)
        .context(format!("dropout for sample {index:06}"))?;

    let (out_flow, out_mask) = match cfg.indexing {
        FlowIndexing::TargetIndexed => (flow, kept),
        FlowIndexing::SourceIndexed => {
            let reindexed = reindex_flow(&flow, FlowIndexing::SourceIndexed, &kept)
                .context(format!("reindexing sample {index:06}"))?;
            (reindexed.flow, reindexed.valid)
        }
    };

    let meta = TripletMeta {
        seed: cfg.seed,
        sample_index: index,
        tx: motion.signed_magnitude,
        fovy: cfg.fovy,
        z_threshold: cfg.z_threshold,
        indexing: cfg.indexing,
    };
    let record = TripletRecord {
        frame_t: frame,
        frame_t1,
        flow: out_flow,
        mask: out_mask,
        meta,
    };

    let dir_name = format!("sample_{index:06}");
    let sample_dir = cfg.out.join(&dir_name);
    write_triplet(&sample_dir, &record).with_context_path("writing triplet", &sample_dir)?;
    if cfg.npy {
        let path = sample_dir.join("flow.npy");
        write_npy_flow(&path, &record.flow).with_context_path("writing NPY", &path)?;
    }
    if cfg.npy_normalized {
        let path = sample_dir.join("flow_norm.npy");
        write_npy_flow_normalized(&path, &record.flow)
            .with_context_path("writing normalized NPY", &path)?;
    }
    if cfg.kitti {
        let path = sample_dir.join("flow_kitti.png");
        write_kitti_png(&path, &record.flow, &record.mask)
            .with_context_path("writing KITTI PNG", &path)?;
    }

    Ok(format!(
        "sample={index:06} status=ok dir={dir_name} frame={frame_name} stream={base_stream:#018x} \
         tx={} valid_fraction={:.6}",
        motion.signed_magnitude,
        record.mask.valid_fraction()
    ))
}

/// Small helper so path-bearing failures always say which file they hit.
trait PathContext<T> {
    fn with_context_path(self, what: &str, path: &Path) -> Result<T, RunError>;
}

impl<T, E: Into<RunError>> PathContext<T> for Result<T, E> {
    fn with_context_path(self, what: &str, path: &Path) -> Result<T, RunError> {
        self.context(format_args!("{what} {}", path.display()))
    }
}
