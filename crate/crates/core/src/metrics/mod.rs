//! Segmentation tracking metrics: overlap, surface distance, centroid
//! distance, and their per-sequence and per-cohort aggregates.
//!
//! Empty-mask conventions: DSC is 1 when both masks are empty and 0 when
//! exactly one is; surface and centroid distances are undefined for an empty
//! mask, so such frames are marked invalid and left out of the distance
//! aggregates (their DSC still counts).
//!
//! HD95 and ASD are taken over the pooled directed distances of both
//! boundaries; percentiles use linear interpolation between order
//! statistics (`h = (n - 1) q`).

mod distance;

use std::io::{Read, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Mask2D;
use crate::tracker::{latency_report, LatencySummary, TrackingResult};

pub use distance::{boundary, directed_distances, squared_distance_map};

pub const SCHEMA_VERSION: u32 = 1;

/// CSV columns of per-frame records, in order.
pub const CSV_COLUMNS: [&str; 9] = ["case_id", "frame", "dsc", "hd", "hd95", "asd", "cd", "ms", "valid"];

/// `q`-th percentile (0..=100) with linear interpolation. `values` need not
/// be sorted; returns NaN when empty.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * (q / 100.0).clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

fn same_geometry(a: &Mask2D, b: &Mask2D) -> Result<()> {
    a.geometry().ensure_same(b.geometry(), "second mask")
}

/// `2|A∩B| / (|A| + |B|)`.
pub fn dsc(a: &Mask2D, b: &Mask2D) -> Result<f64> {
    same_geometry(a, b)?;
    let inter = a.values().iter().zip(b.values()).filter(|(x, y)| **x == 1 && **y == 1).count();
    let total = a.count() + b.count();
    if total == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceDistances {
    pub hd: f64,
    pub hd95: f64,
    pub asd: f64,
}

/// Pooled directed boundary distances, in mm.
pub fn pooled_distances(a: &Mask2D, b: &Mask2D) -> Result<Vec<f64>> {
    same_geometry(a, b)?;
    if a.is_blank() || b.is_blank() {
        return Err(Error::UndefinedMetric("surface distance with an empty mask".into()));
    }
    let g = a.geometry();
    let (ba, bb) = (boundary(a), boundary(b));
    let mut d = directed_distances(g, &ba, &bb);
    d.extend(directed_distances(g, &bb, &ba));
    Ok(d)
}

pub fn surface_distances(a: &Mask2D, b: &Mask2D) -> Result<SurfaceDistances> {
    let d = pooled_distances(a, b)?;
    Ok(SurfaceDistances {
        hd: d.iter().copied().fold(0.0, f64::max),
        hd95: percentile(&d, 95.0),
        asd: d.iter().sum::<f64>() / d.len() as f64,
    })
}

/// Distance between foreground centroids, in mm.
pub fn centroid_distance(a: &Mask2D, b: &Mask2D) -> Result<f64> {
    same_geometry(a, b)?;
    match (a.centroid(), b.centroid()) {
        (Some(ca), Some(cb)) => Ok((ca - cb).norm()),
        _ => Err(Error::UndefinedMetric("centroid of an empty mask".into())),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame: usize,
    pub dsc: f64,
    pub hd: Option<f64>,
    pub hd95: Option<f64>,
    pub asd: Option<f64>,
    pub cd: Option<f64>,
    pub ms: f64,
    /// False when the distance metrics are undefined for this frame.
    pub valid: bool,
}

/// All metrics for one predicted / reference pair.
pub fn frame_metrics(frame: usize, pred: &Mask2D, gt: &Mask2D, ms: f64) -> Result<FrameMetrics> {
    let d = dsc(pred, gt)?;
    let (sd, cd) = match (surface_distances(pred, gt), centroid_distance(pred, gt)) {
        (Ok(s), Ok(c)) => (Some(s), Some(c)),
        (Err(Error::UndefinedMetric(_)), _) | (_, Err(Error::UndefinedMetric(_))) => (None, None),
        (Err(e), _) | (_, Err(e)) => return Err(e),
    };
    Ok(FrameMetrics {
        frame,
        dsc: d,
        hd: sd.map(|s| s.hd),
        hd95: sd.map(|s| s.hd95),
        asd: sd.map(|s| s.asd),
        cd,
        ms,
        valid: sd.is_some(),
    })
}

/// Mean, median and worst value of one metric.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub median: f64,
    /// Minimum for DSC, maximum for distances.
    pub worst: f64,
}

impl Stat {
    fn of(values: &[f64], higher_is_better: bool) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let worst = if higher_is_better {
            values.iter().copied().fold(f64::INFINITY, f64::min)
        } else {
            values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
        };
        Some(Stat {
            mean: values.iter().sum::<f64>() / values.len() as f64,
            median: percentile(values, 50.0),
            worst,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    /// Frames contributing to DSC (every evaluated frame).
    pub frames: usize,
    /// Frames left out of the distance aggregates.
    pub excluded: usize,
    pub dsc: Option<Stat>,
    pub hd: Option<Stat>,
    pub hd95: Option<Stat>,
    pub asd: Option<Stat>,
    pub cd: Option<Stat>,
}

impl Aggregate {
    pub fn of(frames: &[FrameMetrics]) -> Self {
        let pick = |f: fn(&FrameMetrics) -> Option<f64>| -> Vec<f64> { frames.iter().filter_map(f).collect() };
        let dscs: Vec<f64> = frames.iter().map(|f| f.dsc).collect();
        Aggregate {
            frames: frames.len(),
            excluded: frames.iter().filter(|f| !f.valid).count(),
            dsc: Stat::of(&dscs, true),
            hd: Stat::of(&pick(|f| f.hd), false),
            hd95: Stat::of(&pick(|f| f.hd95), false),
            asd: Stat::of(&pick(|f| f.asd), false),
            cd: Stat::of(&pick(|f| f.cd), false),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub case_id: String,
    pub strategy: Option<String>,
    /// Frames `t >= 1`; frame 0 is the given annotation.
    pub frames: Vec<FrameMetrics>,
    pub aggregate: Aggregate,
    pub latency: Option<LatencySummary>,
}

impl MetricsReport {
    /// Builds a report from per-frame records.
    pub fn from_frames(
        case_id: impl Into<String>,
        strategy: Option<String>,
        frames: Vec<FrameMetrics>,
        latency: Option<LatencySummary>,
    ) -> Self {
        MetricsReport {
            schema_version: SCHEMA_VERSION,
            case_id: case_id.into(),
            strategy,
            aggregate: Aggregate::of(&frames),
            frames,
            latency,
        }
    }

    pub fn mean_dsc(&self) -> Option<f64> {
        self.aggregate.dsc.map(|s| s.mean)
    }

    pub fn mean_hd(&self) -> Option<f64> {
        self.aggregate.hd.map(|s| s.mean)
    }

    /// Per-frame CSV with the columns of [`CSV_COLUMNS`]; undefined
    /// distances are empty cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        write_frames_csv(std::slice::from_ref(self), out)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: MetricsReport = serde_json::from_str(s)?;
        check_schema(r.schema_version)?;
        Ok(r)
    }
}

pub(crate) fn check_schema(v: u32) -> Result<()> {
    if v != SCHEMA_VERSION {
        return Err(Error::Input(format!(
            "report schema version {v} is not supported (expected {SCHEMA_VERSION})"
        )));
    }
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// Writes the per-frame rows of several reports into one CSV.
pub fn write_frames_csv<W: Write>(reports: &[MetricsReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS)?;
    for r in reports {
        for f in &r.frames {
            w.write_record([
                r.case_id.clone(),
                f.frame.to_string(),
                f.dsc.to_string(),
                opt(f.hd),
                opt(f.hd95),
                opt(f.asd),
                opt(f.cd),
                f.ms.to_string(),
                f.valid.to_string(),
            ])?;
        }
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Reads per-frame rows back as `(case_id, FrameMetrics)`.
pub fn read_frames_csv<R: Read>(input: R) -> Result<Vec<(String, FrameMetrics)>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != CSV_COLUMNS {
        return Err(Error::Input(format!("unexpected CSV header {header:?}")));
    }
    let parse_f = |s: &str| -> Result<f64> {
        s.parse().map_err(|_| Error::Input(format!("bad number `{s}` in CSV")))
    };
    let parse_opt = |s: &str| -> Result<Option<f64>> {
        if s.is_empty() {
            Ok(None)
        } else {
            parse_f(s).map(Some)
        }
    };
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let frame = rec[1]
            .parse()
            .map_err(|_| Error::Input(format!("bad frame index `{}`", &rec[1])))?;
        let valid = rec[8]
            .parse()
            .map_err(|_| Error::Input(format!("bad valid flag `{}`", &rec[8])))?;
        out.push((
            rec[0].to_string(),
            FrameMetrics {
                frame,
                dsc: parse_f(&rec[2])?,
                hd: parse_opt(&rec[3])?,
                hd95: parse_opt(&rec[4])?,
                asd: parse_opt(&rec[5])?,
                cd: parse_opt(&rec[6])?,
                ms: parse_f(&rec[7])?,
                valid,
            },
        ));
    }
    Ok(out)
}

/// Evaluates predicted masks against references for frames `t >= 1`.
pub fn evaluate_masks(
    case_id: &str,
    pred: &[Mask2D],
    gt: &[Mask2D],
    per_frame_ms: Option<&[f64]>,
) -> Result<MetricsReport> {
    if pred.len() != gt.len() {
        return Err(Error::Input(format!(
            "{} predicted masks but {} reference masks",
            pred.len(),
            gt.len()
        )));
    }
    if let Some(ms) = per_frame_ms {
        if ms.len() != pred.len() {
            return Err(Error::Input("timing count does not match mask count".into()));
        }
    }
    let frames = (1..pred.len())
        .into_par_iter()
        .map(|t| frame_metrics(t, &pred[t], &gt[t], per_frame_ms.map_or(0.0, |m| m[t])))
        .collect::<Result<Vec<_>>>()?;
    Ok(MetricsReport::from_frames(case_id, None, frames, None))
}

/// Evaluates a tracking result, folding in its latency statistics.
pub fn evaluate_sequence(pred: &TrackingResult, gt: &[Mask2D], budget_ms: Option<f64>) -> Result<MetricsReport> {
    let mut r = evaluate_masks(&pred.case_id, &pred.masks, gt, Some(&pred.per_frame_ms))?;
    r.strategy = Some(pred.strategy.as_str().to_string());
    r.latency = Some(latency_report(pred, budget_ms));
    Ok(r)
}

/// Per-case means of one cohort entry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMeans {
    pub case_id: String,
    pub dsc: Option<f64>,
    pub hd: Option<f64>,
    pub hd95: Option<f64>,
    pub asd: Option<f64>,
    pub cd: Option<f64>,
}

impl CaseMeans {
    fn of(r: &MetricsReport) -> Self {
        let a = &r.aggregate;
        CaseMeans {
            case_id: r.case_id.clone(),
            dsc: a.dsc.map(|s| s.mean),
            hd: a.hd.map(|s| s.mean),
            hd95: a.hd95.map(|s| s.mean),
            asd: a.asd.map(|s| s.mean),
            cd: a.cd.map(|s| s.mean),
        }
    }
}

/// Multi-case summary: each case is reduced to its frame means first, then
/// the cohort value is the mean over cases (cases weigh equally regardless
/// of length).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortReport {
    pub schema_version: u32,
    pub cases: Vec<CaseMeans>,
    pub mean: CaseMeans,
}

pub fn aggregate_cohort(reports: &[MetricsReport]) -> CohortReport {
    let cases: Vec<CaseMeans> = reports.iter().map(CaseMeans::of).collect();
    let mean_of = |f: fn(&CaseMeans) -> Option<f64>| {
        let v: Vec<f64> = cases.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    let mean = CaseMeans {
        case_id: "mean".into(),
        dsc: mean_of(|c| c.dsc),
        hd: mean_of(|c| c.hd),
        hd95: mean_of(|c| c.hd95),
        asd: mean_of(|c| c.asd),
        cd: mean_of(|c| c.cd),
    };
    CohortReport {
        schema_version: SCHEMA_VERSION,
        cases,
        mean,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{Geometry, Vec2};

    fn mask(w: usize, h: usize, on: &[(usize, usize)]) -> Mask2D {
        let mut m = Mask2D::empty(Geometry::unit(w, h));
        for &(c, r) in on {
            m.set(c, r, true);
        }
        m
    }

    #[test]
    fn dsc_hand_counts() {
        let a = mask(6, 6, &[(0, 0), (1, 0), (2, 0), (3, 0)]);
        let b = mask(6, 6, &[(2, 0), (3, 0), (4, 0), (5, 0)]);
        assert_eq!(dsc(&a, &a).unwrap(), 1.0);
        assert_eq!(dsc(&a, &b).unwrap(), 0.5);
        let c = mask(6, 6, &[(0, 5)]);
        assert_eq!(dsc(&a, &c).unwrap(), 0.0);
        let e = mask(6, 6, &[]);
        assert_eq!(dsc(&e, &e).unwrap(), 1.0);
        assert_eq!(dsc(&a, &e).unwrap(), 0.0);
        assert!(dsc(&a, &mask(5, 6, &[])).is_err());
    }

    #[test]
    fn single_pixels_three_mm_apart() {
        let g = Geometry::new(8, 8, Vec2::new(1.5, 1.5), Vec2::ZERO).unwrap();
        let mut a = Mask2D::empty(g);
        let mut b = Mask2D::empty(g);
        a.set(1, 1, true);
        b.set(3, 1, true);
        let s = surface_distances(&a, &b).unwrap();
        assert_eq!((s.hd, s.hd95, s.asd), (3.0, 3.0, 3.0));
        assert_eq!(centroid_distance(&a, &b).unwrap(), 3.0);
    }

    #[test]
    fn empty_masks_are_undefined_for_distances() {
        let a = mask(4, 4, &[(1, 1)]);
        let e = mask(4, 4, &[]);
        assert!(matches!(surface_distances(&a, &e), Err(Error::UndefinedMetric(_))));
        assert!(matches!(centroid_distance(&e, &a), Err(Error::UndefinedMetric(_))));
        let f = frame_metrics(1, &e, &a, 0.0).unwrap();
        assert!(!f.valid);
        assert_eq!(f.dsc, 0.0);
        assert_eq!(f.hd, None);
    }

    #[test]
    fn percentile_interpolates() {
        assert_eq!(percentile(&[3.0, 1.0, 2.0, 4.0], 50.0), 2.5);
        assert_eq!(percentile(&[5.0], 95.0), 5.0);
        assert!((percentile(&[0.0, 10.0], 95.0) - 9.5).abs() < 1e-12);
    }

    #[test]
    fn sequence_report_excludes_frame_zero_and_invalid_frames() {
        let a = mask(6, 6, &[(1, 1), (2, 1)]);
        let b = mask(6, 6, &[(2, 1), (3, 1)]);
        let e = mask(6, 6, &[]);
        let pred = vec![a.clone(), a.clone(), e, b.clone()];
        let gt = vec![a.clone(), a.clone(), a.clone(), a.clone()];
        let r = evaluate_masks("c", &pred, &gt, None).unwrap();
        assert_eq!(r.frames.len(), 3);
        assert_eq!(r.aggregate.excluded, 1);
        assert_eq!(r.aggregate.dsc.unwrap().worst, 0.0);
        assert_eq!(r.aggregate.hd.unwrap().worst, 1.0);
        assert_eq!(r.aggregate.cd.unwrap().mean, 0.5);
        assert!(evaluate_masks("c", &pred[..3], &gt, None).is_err());
    }

    #[test]
    fn empty_report_csv_has_header_only() {
        let r = MetricsReport::from_frames("x", None, vec![], None);
        let mut buf = Vec::new();
        r.write_csv(&mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "case_id,frame,dsc,hd,hd95,asd,cd,ms,valid\n");
        assert_eq!(r.aggregate.dsc, None);
    }

    #[test]
    fn cohort_averages_case_means() {
        let mk = |id: &str, d: &[f64]| {
            let frames = d
                .iter()
                .enumerate()
                .map(|(i, &v)| FrameMetrics {
                    frame: i + 1,
                    dsc: v,
                    hd: Some(1.0),
                    hd95: Some(1.0),
                    asd: Some(1.0),
                    cd: Some(1.0),
                    ms: 0.0,
                    valid: true,
                })
                .collect();
            MetricsReport::from_frames(id, None, frames, None)
        };
        let c = aggregate_cohort(&[mk("a", &[1.0, 1.0, 1.0]), mk("b", &[0.0])]);
        assert_eq!(c.mean.dsc, Some(0.5));
        assert_eq!(c.cases.len(), 2);
    }
}
