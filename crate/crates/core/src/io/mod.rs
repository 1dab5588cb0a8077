//! On-disk layout for cases, tracking results and reports.
//!
//! A case directory holds:
//!
//! ```text
//! frames.mha       NDims = 3 MET_FLOAT, one slice per frame
//! first_mask.mha   NDims = 2 MET_UCHAR annotation of frame 0
//! gt_masks.mha     optional NDims = 3 MET_UCHAR reference masks
//! meta.json        {"case_id", "frame_rate_hz", "field_strength_t"}
//! ```
//!
//! A result directory holds `masks/frame_NNNN.mha` plus `tracking.json`.
//! Writers assume exclusive access to their target paths.

pub mod metaimage;

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Mask2D;
use crate::metrics::{read_frames_csv, write_frames_csv, FrameMetrics, MetricsReport};
use crate::tracker::{CineSequence, TrackingResult, TrackingSummary, FRAME_RATE_RANGE};

pub use metaimage::{
    read_image, read_image_stack, read_mask, read_mask_stack, read_metaimage, write_image,
    write_image_stack, write_mask, write_mask_stack, write_metaimage, ElementType, MetaImage,
};

pub const FRAMES_FILE: &str = "frames.mha";
pub const FIRST_MASK_FILE: &str = "first_mask.mha";
pub const GT_MASKS_FILE: &str = "gt_masks.mha";
pub const META_FILE: &str = "meta.json";
pub const MASKS_DIR: &str = "masks";
pub const TRACKING_FILE: &str = "tracking.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMeta {
    pub case_id: String,
    pub frame_rate_hz: f64,
    #[serde(default)]
    pub field_strength_t: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Case {
    pub sequence: CineSequence,
    pub gt_masks: Option<Vec<Mask2D>>,
    pub meta: CaseMeta,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

pub fn write_json<T: Serialize + ?Sized>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let s = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

/// Writes a case directory, creating it if needed.
pub fn write_case(dir: impl AsRef<Path>, seq: &CineSequence, gt_masks: Option<&[Mask2D]>) -> Result<()> {
    let dir = dir.as_ref();
    if let Some(gt) = gt_masks {
        if gt.len() != seq.len() {
            return Err(Error::Input(format!(
                "{} reference masks for {} frames",
                gt.len(),
                seq.len()
            )));
        }
    }
    create_dir(dir)?;
    write_image_stack(&seq.frames, dir.join(FRAMES_FILE))?;
    write_mask(&seq.first_mask, dir.join(FIRST_MASK_FILE))?;
    if let Some(gt) = gt_masks {
        write_mask_stack(gt, dir.join(GT_MASKS_FILE))?;
    }
    let meta = CaseMeta {
        case_id: seq.case_id.clone(),
        frame_rate_hz: seq.frame_rate_hz,
        field_strength_t: None,
    };
    write_json(&meta, dir.join(META_FILE))
}

/// Reads a case directory. `gt_masks.mha` is optional.
pub fn read_case(dir: impl AsRef<Path>) -> Result<Case> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::Input(format!("case directory {} does not exist", dir.display())));
    }
    let meta: CaseMeta = read_json(dir.join(META_FILE))?;
    let (lo, hi) = FRAME_RATE_RANGE;
    if !(lo..=hi).contains(&meta.frame_rate_hz) {
        return Err(Error::Input(format!(
            "{}: frame_rate_hz {} outside [{lo}, {hi}]",
            dir.display(),
            meta.frame_rate_hz
        )));
    }
    let frames = read_image_stack(dir.join(FRAMES_FILE))?;
    let first_mask = read_mask(dir.join(FIRST_MASK_FILE))?;
    let gt_path = dir.join(GT_MASKS_FILE);
    let gt_masks = if gt_path.exists() {
        let gt = read_mask_stack(&gt_path)?;
        if gt.len() != frames.len() {
            return Err(Error::Input(format!(
                "{}: {} reference masks for {} frames",
                dir.display(),
                gt.len(),
                frames.len()
            )));
        }
        gt[0].geometry().ensure_same(frames[0].geometry(), "reference masks")?;
        Some(gt)
    } else {
        None
    };
    let sequence = CineSequence::new(frames, first_mask, meta.frame_rate_hz, meta.case_id.clone())?;
    Ok(Case {
        sequence,
        gt_masks,
        meta,
    })
}

pub fn mask_file_name(frame: usize) -> String {
    format!("frame_{frame:04}.mha")
}

/// Writes per-frame masks and the JSON summary of a tracking run.
pub fn write_tracking_result(dir: impl AsRef<Path>, r: &TrackingResult) -> Result<()> {
    let dir = dir.as_ref();
    let masks_dir = dir.join(MASKS_DIR);
    create_dir(&masks_dir)?;
    for (t, m) in r.masks.iter().enumerate() {
        write_mask(m, masks_dir.join(mask_file_name(t)))?;
    }
    write_json(&r.summary(), dir.join(TRACKING_FILE))
}

/// Reads the masks and summary written by [`write_tracking_result`].
pub fn read_tracking_result(dir: impl AsRef<Path>) -> Result<(Vec<Mask2D>, TrackingSummary)> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(Error::Input(format!("result directory {} does not exist", dir.display())));
    }
    let summary: TrackingSummary = read_json(dir.join(TRACKING_FILE))?;
    crate::metrics::check_schema(summary.schema_version)?;
    let masks = (0..summary.frames)
        .map(|t| read_mask(dir.join(MASKS_DIR).join(mask_file_name(t))))
        .collect::<Result<Vec<_>>>()?;
    Ok((masks, summary))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Writes a metrics report. CSV carries the per-frame rows only.
pub fn write_report(report: &MetricsReport, path: impl AsRef<Path>, format: ReportFormat) -> Result<()> {
    let path = path.as_ref();
    match format {
        ReportFormat::Json => write_json(report, path),
        ReportFormat::Csv => {
            let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
            report.write_csv(std::io::BufWriter::new(f))
        }
    }
}

pub fn read_report_json(path: impl AsRef<Path>) -> Result<MetricsReport> {
    let r: MetricsReport = read_json(path)?;
    crate::metrics::check_schema(r.schema_version)?;
    Ok(r)
}

pub fn write_reports_csv(reports: &[MetricsReport], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_frames_csv(reports, std::io::BufWriter::new(f))
}

pub fn read_report_csv(path: impl AsRef<Path>) -> Result<Vec<(String, FrameMetrics)>> {
    let path = path.as_ref();
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_frames_csv(f)
}

/// Case directories directly under `root`, sorted by name. `root` itself
/// is returned when it is a case directory.
pub fn list_cases(root: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let root = root.as_ref();
    if !root.is_dir() {
        return Err(Error::Input(format!("{} is not a directory", root.display())));
    }
    if root.join(META_FILE).exists() || root.join(TRACKING_FILE).exists() {
        return Ok(vec![root.to_path_buf()]);
    }
    let mut out: Vec<PathBuf> = fs::read_dir(root)
        .map_err(|e| Error::io(root, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(META_FILE).exists() || p.join(TRACKING_FILE).exists())
        .collect();
    out.sort();
    Ok(out)
}
