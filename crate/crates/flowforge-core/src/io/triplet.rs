//! Training-triplet directories.
//!
//! One sample occupies one directory with fixed member names:
//!
//! * `frame_t.png` — the source frame,
//! * `frame_t1.png` — the synthesized next frame,
//! * `flow.flo` — the dense flow between them,
//! * `mask.png` — flow validity (255 = valid),
//! * `meta` — `key=value` lines recording provenance.
//!
//! The metadata carries the flow's indexing convention, since `.flo` files
//! cannot. Readers restore the tag from `meta` and verify that every member
//! is present with matching dimensions.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{FlowField, FlowIndexing, Image, ValidityMask};

use super::flo::{read_flo, write_flo};
use super::png::{read_png_image, read_png_mask, write_png_image, write_png_mask};

pub const FRAME_T_NAME: &str = "frame_t.png";
pub const FRAME_T1_NAME: &str = "frame_t1.png";
pub const FLOW_NAME: &str = "flow.flo";
pub const MASK_NAME: &str = "mask.png";
pub const META_NAME: &str = "meta";

/// Provenance of one generated sample.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletMeta {
    /// Global seed the run was launched with.
    pub seed: u64,
    /// Index of this sample within the run.
    pub sample_index: u64,
    /// Signed translation magnitude of the camera move, in meters.
    pub tx: f64,
    /// Vertical field of view of the virtual camera, in degrees.
    pub fovy: f64,
    /// Pixel-filtering threshold the sample was generated under.
    pub z_threshold: f64,
    /// Indexing convention of `flow.flo`.
    pub indexing: FlowIndexing,
}

impl TripletMeta {
    /// Serializes to `key=value` lines in a fixed order.
    pub fn to_text(&self) -> String {
        format!(
            "seed={}\nsample_index={}\ntx={}\nfovy={}\nz_threshold={}\nindexing={}\n",
            self.seed,
            self.sample_index,
            self.tx,
            self.fovy,
            self.z_threshold,
            self.indexing.tag(),
        )
    }

    /// Parses `key=value` lines. Blank lines and `#` comments are skipped,
    /// unknown keys are ignored (forward compatibility), duplicate or
    /// missing required keys are rejected.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut seed: Option<u64> = None;
        let mut sample_index: Option<u64> = None;
        let mut tx: Option<f64> = None;
        let mut fovy: Option<f64> = None;
        let mut z_threshold: Option<f64> = None;
        let mut indexing: Option<FlowIndexing> = None;

        fn store<T>(slot: &mut Option<T>, key: &str, value: T) -> Result<()> {
            if slot.is_some() {
                return Err(Error::MetaParse {
                    detail: format!("duplicate key {key:?}"),
                });
            }
            *slot = Some(value);
            Ok(())
        }
        fn parse_u64(key: &str, value: &str) -> Result<u64> {
            value.parse().map_err(|_| Error::MetaParse {
                detail: format!("{key}={value:?} is not an unsigned integer"),
            })
        }
        fn parse_f64(key: &str, value: &str) -> Result<f64> {
            let parsed: f64 = value.parse().map_err(|_| Error::MetaParse {
                detail: format!("{key}={value:?} is not a number"),
            })?;
            if !parsed.is_finite() {
                return Err(Error::MetaParse {
                    detail: format!("{key}={value:?} is not finite"),
                });
            }
            Ok(parsed)
        }

        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::MetaParse {
                detail: format!("line {line:?} is not key=value"),
            })?;
            let (key, value) = (key.trim(), value.trim());
            match key {
                "seed" => store(&mut seed, key, parse_u64(key, value)?)?,
                "sample_index" => store(&mut sample_index, key, parse_u64(key, value)?)?,
                "tx" => store(&mut tx, key, parse_f64(key, value)?)?,
                "fovy" => store(&mut fovy, key, parse_f64(key, value)?)?,
                "z_threshold" => store(&mut z_threshold, key, parse_f64(key, value)?)?,
                "indexing" => store(&mut indexing, key, FlowIndexing::from_tag(value)?)?,
                _ => {}
            }
        }
        let missing = |key: &str| Error::MetaParse {
            detail: format!("missing required key {key:?}"),
        };
        Ok(Self {
            seed: seed.ok_or_else(|| missing("seed"))?,
            sample_index: sample_index.ok_or_else(|| missing("sample_index"))?,
            tx: tx.ok_or_else(|| missing("tx"))?,
            fovy: fovy.ok_or_else(|| missing("fovy"))?,
            z_threshold: z_threshold.ok_or_else(|| missing("z_threshold"))?,
            indexing: indexing.ok_or_else(|| missing("indexing"))?,
        })
    }
}

/// One complete training sample.
#[derive(Debug, Clone)]
pub struct TripletRecord {
    pub frame_t: Image,
    pub frame_t1: Image,
    pub flow: FlowField,
    pub mask: ValidityMask,
    pub meta: TripletMeta,
}

impl TripletRecord {
    fn check_dimensions(&self) -> Result<()> {
        let (w, h) = (self.frame_t.width(), self.frame_t.height());
        let members: [(usize, usize); 3] = [
            (self.frame_t1.width(), self.frame_t1.height()),
            (self.flow.width(), self.flow.height()),
            (self.mask.width(), self.mask.height()),
        ];
        for (mw, mh) in members {
            if (mw, mh) != (w, h) {
                return Err(Error::DimensionMismatch {
                    expected_width: w,
                    expected_height: h,
                    actual_width: mw,
                    actual_height: mh,
                });
            }
        }
        Ok(())
    }
}

/// Writes `record` into `dir`, creating the directory if needed.
///
/// The flow's indexing tag must agree with the metadata — the tag survives
/// only through `meta`, so a disagreement would corrupt the sample.
pub fn write_triplet(dir: &Path, record: &TripletRecord) -> Result<()> {
    record.check_dimensions()?;
    if record.flow.indexing() != record.meta.indexing {
        return Err(Error::IndexingMismatch {
            expected: record.meta.indexing,
            actual: record.flow.indexing(),
        });
    }
    fs::create_dir_all(dir)?;
    write_png_image(&dir.join(FRAME_T_NAME), &record.frame_t)?;
    write_png_image(&dir.join(FRAME_T1_NAME), &record.frame_t1)?;
    write_flo(&dir.join(FLOW_NAME), &record.flow)?;
    write_png_mask(&dir.join(MASK_NAME), &record.mask)?;
    fs::write(dir.join(META_NAME), record.meta.to_text())?;
    Ok(())
}

/// Reads a triplet directory back, restoring the flow's indexing from the
/// metadata. Any absent member is a [`Error::MissingTripletMember`].
pub fn read_triplet(dir: &Path) -> Result<TripletRecord> {
    for name in [FRAME_T_NAME, FRAME_T1_NAME, FLOW_NAME, MASK_NAME, META_NAME] {
        if !dir.join(name).is_file() {
            return Err(Error::MissingTripletMember {
                name: name.to_string(),
            });
        }
    }
    let frame_t = read_png_image(&dir.join(FRAME_T_NAME))?;
    let frame_t1 = read_png_image(&dir.join(FRAME_T1_NAME))?;
    let flow = read_flo(&dir.join(FLOW_NAME))?;
    let mask = read_png_mask(&dir.join(MASK_NAME))?;
    let meta = TripletMeta::from_text(&fs::read_to_string(dir.join(META_NAME))?)?;
    let record = TripletRecord {
        frame_t,
        frame_t1,
        flow: flow.with_indexing(meta.indexing),
        mask,
        meta,
    };
    record.check_dimensions()?;
    Ok(record)
}
