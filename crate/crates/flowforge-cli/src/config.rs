//! Synthesis configuration: protocol defaults, key=value config files, and
//! command-line overrides.
//!
//! Precedence, lowest to highest: built-in defaults, then the `--config`
//! file, then explicit command-line flags. The seed additionally falls back
//! to the `FLOWFORGE_SEED` environment variable when neither the file nor a
//! flag provides one. Every key is range-checked at resolve time and every
//! rejection names the offending key, so a bad configuration can never crash
//! a run half way through.

use std::collections::BTreeSet;
use std::env;
use std::path::{Path, PathBuf};

use clap::Args;
use flowforge_core::synthesis::MotionConfig;
use flowforge_core::FlowIndexing;

use crate::error::RunError;

/// Environment variable consulted for the seed when no flag or config key
/// sets one.
pub const SEED_ENV_VAR: &str = "FLOWFORGE_SEED";

pub const DEFAULT_N_SAMPLES: u64 = 5000;
pub const DEFAULT_SIZE: usize = 512;
/// Primary vertical field of view in degrees; `ALT_FOVY_DEG` is the
/// alternative used for wide-baseline renders.
pub const DEFAULT_FOVY_DEG: f64 = 29.2;
pub const ALT_FOVY_DEG: f64 = 26.5;
pub const DEFAULT_MAX_DEPTH: f64 = flowforge_core::DEFAULT_MAX_DEPTH_METERS;
pub const DEFAULT_T_MIN: f64 = 0.8;
pub const DEFAULT_T_MAX: f64 = 1.2;
pub const DEFAULT_Z_THRESHOLD: f64 = 30.0;
pub const DEFAULT_DROPOUT: f64 = 0.10;
pub const DEFAULT_WORKERS: usize = 1;
pub const DEFAULT_AXIS: [f64; 3] = [1.0, 0.0, 0.0];

/// Command-line surface of `flowforge synth`. Every field is optional here;
/// requiredness and ranges are enforced in [`resolve`] so values from the
/// config file participate before anything is rejected.
#[derive(Args, Debug, Clone, Default)]
pub struct SynthArgs {
    /// Key=value config file; explicit flags override its entries.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,

    /// Directory of input frames (.png or .pfm).
    #[arg(long, value_name = "DIR")]
    pub frames: Option<PathBuf>,

    /// Directory of depth maps, one `<frame stem>.pfm` per frame.
    #[arg(long, value_name = "DIR")]
    pub depths: Option<PathBuf>,

    /// Output dataset directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,

    /// Number of triplets to synthesize [default: 5000].
    #[arg(long, value_name = "N")]
    pub n_samples: Option<u64>,

    /// Square output resolution in pixels [default: 512].
    #[arg(long, value_name = "PX")]
    pub size: Option<usize>,

    /// Vertical field of view in degrees [default: 29.2].
    #[arg(long, value_name = "DEG")]
    pub fovy: Option<f64>,

    /// Depth clamp in meters; deeper readings are clipped [default: 80].
    #[arg(long, value_name = "M")]
    pub max_depth: Option<f64>,

    /// Lower bound of the translation magnitude draw [default: 0.8].
    #[arg(long, value_name = "M")]
    pub t_min: Option<f64>,

    /// Upper bound of the translation magnitude draw [default: 1.2].
    #[arg(long, value_name = "M")]
    pub t_max: Option<f64>,

    /// Translation axis as "x,y,z"; normalized internally [default: 1,0,0].
    #[arg(long, value_name = "X,Y,Z", allow_hyphen_values = true)]
    pub axis: Option<String>,

    /// Flip the translation direction with probability 1/2 [default: true].
    #[arg(long, value_name = "BOOL")]
    pub allow_negative: Option<bool>,

    /// Photometric consistency threshold Z in intensity levels [default: 30].
    #[arg(long, value_name = "Z")]
    pub z_threshold: Option<f64>,

    /// Fraction of valid flow vectors to drop at random [default: 0.1].
    #[arg(long, value_name = "RATE")]
    pub dropout: Option<f64>,

    /// Flow indexing written to disk: "source" or "target" [default: source].
    #[arg(long, value_name = "KIND")]
    pub indexing: Option<String>,

    /// RNG seed [default: $FLOWFORGE_SEED, else 0].
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,

    /// Worker threads; results are identical for any count [default: 1].
    #[arg(long, value_name = "N")]
    pub workers: Option<usize>,

    /// Also export each flow as NPY (float32, H x W x 2).
    #[arg(long)]
    pub npy: bool,

    /// Normalize NPY flow components to [-1, 1] spans (implies --npy).
    #[arg(long)]
    pub npy_normalized: bool,

    /// Also export each flow as a KITTI 16-bit PNG.
    #[arg(long)]
    pub kitti: bool,

    /// Debug: force the identity camera move (zero flow everywhere).
    #[arg(long)]
    pub identity_motion: bool,
}

/// Fully resolved synthesis configuration. Construction goes through
/// [`resolve`], which is the only place defaults and validation live.
#[derive(Debug, Clone)]
pub struct SynthConfig {
    pub frames: PathBuf,
    pub depths: PathBuf,
    pub out: PathBuf,
    pub n_samples: u64,
    pub size: usize,
    pub fovy: f64,
    pub max_depth: f64,
    pub t_min: f64,
    pub t_max: f64,
    pub axis: [f64; 3],
    pub allow_negative: bool,
    pub z_threshold: f64,
    pub dropout: f64,
    pub indexing: FlowIndexing,
    pub seed: u64,
    pub workers: usize,
    pub npy: bool,
    pub npy_normalized: bool,
    pub kitti: bool,
    pub identity_motion: bool,
}

impl SynthConfig {
    pub fn motion_config(&self) -> MotionConfig {
        MotionConfig {
            translation_range: (self.t_min, self.t_max),
            axis: self.axis,
            allow_negative: self.allow_negative,
            seed: self.seed,
        }
    }
}

/// One partially-specified configuration layer.
#[derive(Debug, Default, Clone)]
struct Draft {
    frames: Option<PathBuf>,
    depths: Option<PathBuf>,
    out: Option<PathBuf>,
    n_samples: Option<u64>,
    size: Option<usize>,
    fovy: Option<f64>,
    max_depth: Option<f64>,
    t_min: Option<f64>,
    t_max: Option<f64>,
    axis: Option<[f64; 3]>,
    allow_negative: Option<bool>,
    z_threshold: Option<f64>,
    dropout: Option<f64>,
    indexing: Option<FlowIndexing>,
    seed: Option<u64>,
    workers: Option<usize>,
    npy: Option<bool>,
    npy_normalized: Option<bool>,
    kitti: Option<bool>,
    identity_motion: Option<bool>,
}

const CONFIG_KEYS: &[&str] = &[
    "frames",
    "depths",
    "out",
    "n_samples",
    "size",
    "fovy",
    "max_depth",
    "t_min",
    "t_max",
    "axis",
    "allow_negative",
    "z_threshold",
    "dropout",
    "indexing",
    "seed",
    "workers",
    "npy",
    "npy_normalized",
    "kitti",
    "identity_motion",
];

impl Draft {
    fn set(&mut self, key: &str, value: &str) -> Result<(), RunError> {
        match key {
            "frames" => self.frames = Some(PathBuf::from(value)),
            "depths" => self.depths = Some(PathBuf::from(value)),
            "out" => self.out = Some(PathBuf::from(value)),
            "n_samples" => self.n_samples = Some(parse_u64(key, value)?),
            "size" => self.size = Some(parse_usize(key, value)?),
            "fovy" => self.fovy = Some(parse_f64(key, value)?),
            "max_depth" => self.max_depth = Some(parse_f64(key, value)?),
            "t_min" => self.t_min = Some(parse_f64(key, value)?),
            "t_max" => self.t_max = Some(parse_f64(key, value)?),
            "axis" => self.axis = Some(parse_axis(key, value)?),
            "allow_negative" => self.allow_negative = Some(parse_bool(key, value)?),
            "z_threshold" => self.z_threshold = Some(parse_f64(key, value)?),
            "dropout" => self.dropout = Some(parse_f64(key, value)?),
            "indexing" => self.indexing = Some(parse_indexing(key, value)?),
            "seed" => self.seed = Some(parse_u64(key, value)?),
            "workers" => self.workers = Some(parse_usize(key, value)?),
            "npy" => self.npy = Some(parse_bool(key, value)?),
            "npy_normalized" => self.npy_normalized = Some(parse_bool(key, value)?),
            "kitti" => self.kitti = Some(parse_bool(key, value)?),
            "identity_motion" => self.identity_motion = Some(parse_bool(key, value)?),
            _ => {
                return Err(RunError::usage(format!(
                    "unknown config key {key:?} (valid keys: {})",
                    CONFIG_KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Overlay `top` onto `self`: any value set in `top` wins.
    fn overlay(mut self, top: Draft) -> Draft {
        macro_rules! take {
            ($($field:ident),* $(,)?) => {
                $(if top.$field.is_some() { self.$field = top.$field; })*
            };
        }
        take!(
            frames,
            depths,
            out,
            n_samples,
            size,
            fovy,
            max_depth,
            t_min,
            t_max,
            axis,
            allow_negative,
            z_threshold,
            dropout,
            indexing,
            seed,
            workers,
            npy,
            npy_normalized,
            kitti,
            identity_motion,
        );
        self
    }
}

fn parse_u64(key: &str, raw: &str) -> Result<u64, RunError> {
    raw.parse().map_err(|_| {
        RunError::usage(format!("{key}: expected an unsigned integer, got {raw:?}"))
    })
}

fn parse_usize(key: &str, raw: &str) -> Result<usize, RunError> {
    raw.parse().map_err(|_| {
        RunError::usage(format!("{key}: expected an unsigned integer, got {raw:?}"))
    })
}

fn parse_f64(key: &str, raw: &str) -> Result<f64, RunError> {
    let value: f64 = raw
        .parse()
        .map_err(|_| RunError::usage(format!("{key}: expected a number, got {raw:?}")))?;
    if !value.is_finite() {
        return Err(RunError::usage(format!(
            "{key}: expected a finite number, got {raw:?}"
        )));
    }
    Ok(value)
}

fn parse_bool(key: &str, raw: &str) -> Result<bool, RunError> {
    match raw.to_ascii_lowercase().as_str() {
        "true" | "1" => Ok(true),
        "false" | "0" => Ok(false),
        _ => Err(RunError::usage(format!(
            "{key}: expected true or false, got {raw:?}"
        ))),
    }
}

fn parse_axis(key: &str, raw: &str) -> Result<[f64; 3], RunError> {
    let parts: Vec<&str> = raw.split(',').map(str::trim).collect();
    if parts.len() != 3 {
        return Err(RunError::usage(format!(
            "{key}: expected three comma-separated numbers \"x,y,z\", got {raw:?}"
        )));
    }
    let mut axis = [0.0; 3];
    for (slot, part) in axis.iter_mut().zip(&parts) {
        *slot = parse_f64(key, part)?;
    }
    Ok(axis)
}

fn parse_indexing(key: &str, raw: &str) -> Result<FlowIndexing, RunError> {
    match raw.to_ascii_lowercase().as_str() {
        "source" => Ok(FlowIndexing::SourceIndexed),
        "target" => Ok(FlowIndexing::TargetIndexed),
        _ => Err(RunError::usage(format!(
            "{key}: expected \"source\" or \"target\", got {raw:?}"
        ))),
    }
}

fn parse_config_file(path: &Path) -> Result<Draft, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::io(format!("config file {}: {e}", path.display())))?;
    let mut draft = Draft::default();
    let mut seen = BTreeSet::new();
    for (index, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(RunError::usage(format!(
                "config file {} line {}: expected key=value, got {line:?}",
                path.display(),
                index + 1
            )));
        };
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(RunError::usage(format!(
                "config file {} line {}: duplicate key {key:?}",
                path.display(),
                index + 1
            )));
        }
        draft.set(key, value)?;
    }
    Ok(draft)
}

impl SynthArgs {
    fn to_draft(&self) -> Result<Draft, RunError> {
        Ok(Draft {
            frames: self.frames.clone(),
            depths: self.depths.clone(),
            out: self.out.clone(),
            n_samples: self.n_samples,
            size: self.size,
            fovy: self.fovy,
            max_depth: self.max_depth,
            t_min: self.t_min,
            t_max: self.t_max,
            axis: self
                .axis
                .as_deref()
                .map(|raw| parse_axis("axis", raw))
                .transpose()?,
            allow_negative: self.allow_negative,
            z_threshold: self.z_threshold,
            dropout: self.dropout,
            indexing: self
                .indexing
                .as_deref()
                .map(|raw| parse_indexing("indexing", raw))
                .transpose()?,
            seed: self.seed,
            workers: self.workers,
            // Switches only assert; absence means "no opinion" so a config
            // file setting survives an unrelated command line.
            npy: self.npy.then_some(true),
            npy_normalized: self.npy_normalized.then_some(true),
            kitti: self.kitti.then_some(true),
            identity_motion: self.identity_motion.then_some(true),
        })
    }
}

fn seed_from_env() -> Result<u64, RunError> {
    match env::var(SEED_ENV_VAR) {
        Ok(raw) => raw.trim().parse().map_err(|_| {
            RunError::usage(format!(
                "{SEED_ENV_VAR}: expected an unsigned integer seed, got {raw:?}"
            ))
        }),
        Err(env::VarError::NotPresent) => Ok(0),
        Err(env::VarError::NotUnicode(_)) => Err(RunError::usage(format!(
            "{SEED_ENV_VAR}: value is not valid UTF-8"
        ))),
    }
}

/// Merge defaults, config file, flags, and the seed environment fallback
/// into a validated [`SynthConfig`].
pub fn resolve(args: &SynthArgs) -> Result<SynthConfig, RunError> {
    let file_draft = match &args.config {
        Some(path) => parse_config_file(path)?,
        None => Draft::default(),
    };
    let draft = file_draft.overlay(args.to_draft()?);
    resolve_draft(draft)
}

fn resolve_draft(draft: Draft) -> Result<SynthConfig, RunError> {
    let frames = draft
        .frames
        .ok_or_else(|| RunError::usage("frames: required (pass --frames or set the frames config key)"))?;
    let depths = draft
        .depths
        .ok_or_else(|| RunError::usage("depths: required (pass --depths or set the depths config key)"))?;
    let out = draft
        .out
        .ok_or_else(|| RunError::usage("out: required (pass --out or set the out config key)"))?;
    let seed = match draft.seed {
        Some(seed) => seed,
        None => seed_from_env()?,
    };

    let cfg = SynthConfig {
        frames,
        depths,
        out,
        n_samples: draft.n_samples.unwrap_or(DEFAULT_N_SAMPLES),
        size: draft.size.unwrap_or(DEFAULT_SIZE),
        fovy: draft.fovy.unwrap_or(DEFAULT_FOVY_DEG),
        max_depth: draft.max_depth.unwrap_or(DEFAULT_MAX_DEPTH),
        t_min: draft.t_min.unwrap_or(DEFAULT_T_MIN),
        t_max: draft.t_max.unwrap_or(DEFAULT_T_MAX),
        axis: draft.axis.unwrap_or(DEFAULT_AXIS),
        allow_negative: draft.allow_negative.unwrap_or(true),
        z_threshold: draft.z_threshold.unwrap_or(DEFAULT_Z_THRESHOLD),
        dropout: draft.dropout.unwrap_or(DEFAULT_DROPOUT),
        indexing: draft.indexing.unwrap_or(FlowIndexing::SourceIndexed),
        seed,
        workers: draft.workers.unwrap_or(DEFAULT_WORKERS),
        npy: draft.npy.unwrap_or(false) || draft.npy_normalized.unwrap_or(false),
        npy_normalized: draft.npy_normalized.unwrap_or(false),
        kitti: draft.kitti.unwrap_or(false),
        identity_motion: draft.identity_motion.unwrap_or(false),
    };
    validate(&cfg)?;
    Ok(cfg)
}

fn validate(cfg: &SynthConfig) -> Result<(), RunError> {
    if cfg.n_samples < 1 {
        return Err(RunError::usage("n_samples: must be at least 1"));
    }
    if cfg.size < 2 {
        return Err(RunError::usage(format!(
            "size: must be at least 2 pixels, got {}",
            cfg.size
        )));
    }
    if !(cfg.fovy > 0.0 && cfg.fovy < 180.0) {
        return Err(RunError::usage(format!(
            "fovy: must be inside (0, 180) degrees, got {}",
            cfg.fovy
        )));
    }
    if !(cfg.max_depth > 0.0) {
        return Err(RunError::usage(format!(
            "max_depth: must be positive, got {}",
            cfg.max_depth
        )));
    }
    if cfg.t_min < 0.0 {
        return Err(RunError::usage(format!(
            "t_min: must be non-negative, got {}",
            cfg.t_min
        )));
    }
    if cfg.t_max < cfg.t_min {
        return Err(RunError::usage(format!(
            "t_max: must be at least t_min ({}), got {}",
            cfg.t_min, cfg.t_max
        )));
    }
    let norm = cfg.axis.iter().map(|c| c * c).sum::<f64>().sqrt();
    if norm == 0.0 {
        return Err(RunError::usage("axis: must be a nonzero 3-vector"));
    }
    if cfg.z_threshold < 0.0 {
        return Err(RunError::usage(format!(
            "z_threshold: must be non-negative, got {}",
            cfg.z_threshold
        )));
    }
    if !(0.0..=1.0).contains(&cfg.dropout) {
        return Err(RunError::usage(format!(
            "dropout: must be inside [0, 1], got {}",
            cfg.dropout
        )));
    }
    if cfg.workers < 1 {
        return Err(RunError::usage("workers: must be at least 1"));
    }
    if cfg.out == cfg.frames || cfg.out == cfg.depths {
        return Err(RunError::usage(
            "out: must be distinct from the frames and depths directories",
        ));
    }
    Ok(())
}
