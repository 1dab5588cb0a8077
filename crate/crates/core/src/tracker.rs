//! Sequence-level mask propagation under a wall-clock budget.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bspline::BSplineFFD;
use crate::error::{Error, Result};
use crate::grid::{Image2D, Mask2D, Vec2};
use crate::metrics::percentile;
use crate::registration::{register, warp_mask_with_threshold, PointMap, RegistrationConfig};

/// Acquisition rates accepted for a sequence, in Hz.
pub const FRAME_RATE_RANGE: (f64, f64) = (1.0, 8.0);

#[derive(Debug, Clone, PartialEq)]
pub struct CineSequence {
    pub frames: Vec<Image2D>,
    /// Annotation of frame 0.
    pub first_mask: Mask2D,
    pub frame_rate_hz: f64,
    pub case_id: String,
}

impl CineSequence {
    pub fn new(
        frames: Vec<Image2D>,
        first_mask: Mask2D,
        frame_rate_hz: f64,
        case_id: impl Into<String>,
    ) -> Result<Self> {
        if frames.len() < 2 {
            return Err(Error::Input(format!(
                "a sequence needs at least 2 frames, got {}",
                frames.len()
            )));
        }
        let g = *frames[0].geometry();
        for (t, f) in frames.iter().enumerate().skip(1) {
            f.geometry().ensure_same(&g, &format!("frame {t}"))?;
        }
        first_mask.geometry().ensure_same(&g, "first mask")?;
        if first_mask.is_blank() {
            return Err(Error::Input("first-frame mask is empty".into()));
        }
        let (lo, hi) = FRAME_RATE_RANGE;
        if !(lo..=hi).contains(&frame_rate_hz) {
            return Err(Error::Input(format!(
                "frame rate {frame_rate_hz} Hz outside [{lo}, {hi}]"
            )));
        }
        Ok(CineSequence {
            frames,
            first_mask,
            frame_rate_hz,
            case_id: case_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Copy the first mask to every frame.
    Static,
    /// Register every frame against frame 0.
    RegisterToFirst,
    /// Register consecutive frames and chain the mappings back to frame 0.
    RegisterToPrevious,
}

impl Strategy {
    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Static => "static",
            Strategy::RegisterToFirst => "register_to_first",
            Strategy::RegisterToPrevious => "register_to_previous",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.replace('-', "_").as_str() {
            "static" => Ok(Strategy::Static),
            "register_to_first" | "first" => Ok(Strategy::RegisterToFirst),
            "register_to_previous" | "previous" => Ok(Strategy::RegisterToPrevious),
            _ => Err(Error::Config(format!("unknown strategy `{s}`"))),
        }
    }
}

/// How frames are scheduled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// One frame at a time, in order. Latency figures are only meaningful
    /// in this mode.
    #[default]
    Streaming,
    /// Frames registered concurrently where the strategy allows it.
    Offline,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameFailure {
    pub frame: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackingResult {
    pub case_id: String,
    /// One mask per frame; `masks[0]` is the first mask unchanged.
    pub masks: Vec<Mask2D>,
    /// Wall-clock time per frame; frame 0 is always 0.
    pub per_frame_ms: Vec<f64>,
    pub total_ms: f64,
    pub strategy: Strategy,
    pub mode: Mode,
    pub budget_ms: Option<f64>,
    /// Frames whose time exceeded `budget_ms / (frames - 1)`.
    pub budget_violations: Vec<usize>,
    /// Frames whose registration failed; each kept its predecessor's mask.
    pub failures: Vec<FrameFailure>,
    /// Set by [`TrackingResult::redact_timings`].
    pub timings_redacted: bool,
}

/// Serializable part of a [`TrackingResult`] (everything except the masks).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingSummary {
    pub schema_version: u32,
    pub case_id: String,
    pub strategy: Strategy,
    pub mode: Mode,
    pub frames: usize,
    pub per_frame_ms: Vec<f64>,
    pub total_ms: f64,
    pub budget_ms: Option<f64>,
    pub budget_violations: Vec<usize>,
    pub failures: Vec<FrameFailure>,
    pub mask_areas: Vec<usize>,
    pub timings_redacted: bool,
    pub latency: LatencySummary,
}

impl TrackingResult {
    pub fn summary(&self) -> TrackingSummary {
        TrackingSummary {
            schema_version: 1,
            case_id: self.case_id.clone(),
            strategy: self.strategy,
            mode: self.mode,
            frames: self.masks.len(),
            per_frame_ms: self.per_frame_ms.clone(),
            total_ms: self.total_ms,
            budget_ms: self.budget_ms,
            budget_violations: self.budget_violations.clone(),
            failures: self.failures.clone(),
            mask_areas: self.masks.iter().map(Mask2D::count).collect(),
            timings_redacted: self.timings_redacted,
            latency: latency_report(self, self.budget_ms),
        }
    }

    /// Zeroes every timing and drops the timing-derived budget flags, so
    /// that output depends only on the inputs and seed.
    pub fn redact_timings(&mut self) {
        self.per_frame_ms.iter_mut().for_each(|t| *t = 0.0);
        self.total_ms = 0.0;
        self.budget_violations.clear();
        self.timings_redacted = true;
    }

    pub fn within_budget(&self) -> bool {
        self.budget_violations.is_empty()
    }
}

/// Successive application of pairwise mappings.
///
/// `links[i]` maps frame `i + 1` into frame `i`; a point of frame `t` is
/// carried to frame 0 by applying `links[t-1]`, then `links[t-2]`, and so on.
pub struct TransformChain<'a> {
    pub links: &'a [BSplineFFD],
}

impl PointMap for TransformChain<'_> {
    fn map_point(&self, p: Vec2) -> Option<Vec2> {
        self.links.iter().rev().try_fold(p, |q, t| t.map_point(q))
    }

    fn displacement_bound(&self) -> Option<Vec2> {
        self.links.iter().try_fold(Vec2::ZERO, |acc, t| Some(acc + t.displacement_bound()?))
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Tracks in streaming mode.
pub fn track(
    seq: &CineSequence,
    strategy: Strategy,
    cfg: &RegistrationConfig,
    budget_ms: Option<f64>,
) -> Result<TrackingResult> {
    track_with_mode(seq, strategy, cfg, budget_ms, Mode::Streaming)
}

pub fn track_with_mode(
    seq: &CineSequence,
    strategy: Strategy,
    cfg: &RegistrationConfig,
    budget_ms: Option<f64>,
    mode: Mode,
) -> Result<TrackingResult> {
    if let Some(b) = budget_ms {
        if !(b > 0.0 && b.is_finite()) {
            return Err(Error::Config(format!("budget must be positive, got {b} ms")));
        }
    }
    cfg.validate()?;
    let start = Instant::now();
    let n = seq.len();
    let geometry = *seq.first_mask.geometry();
    let warp = |map: &dyn PointMap| {
        warp_mask_with_threshold(&seq.first_mask, map, &geometry, cfg.mask_threshold)
    };

    let mut masks = Vec::with_capacity(n);
    masks.push(seq.first_mask.clone());
    let mut per_frame_ms = vec![0.0; n];
    let mut failures = Vec::new();

    match strategy {
        Strategy::Static => {
            for ms in per_frame_ms.iter_mut().skip(1) {
                let t0 = Instant::now();
                masks.push(seq.first_mask.clone());
                *ms = ms_since(t0);
            }
        }
        Strategy::RegisterToFirst => {
            let frame = |t: usize| {
                let t0 = Instant::now();
                let out = register(&seq.frames[t], &seq.frames[0], cfg).map(|(tf, _)| warp(&tf));
                (out, ms_since(t0))
            };
            let results: Vec<_> = match mode {
                Mode::Streaming => (1..n).map(frame).collect(),
                Mode::Offline => (1..n).into_par_iter().map(frame).collect(),
            };
            for (t, (out, ms)) in (1..n).zip(results) {
                per_frame_ms[t] = ms;
                match out {
                    Ok(m) => masks.push(m),
                    Err(e) => {
                        failures.push(FrameFailure {
                            frame: t,
                            message: e.to_string(),
                        });
                        masks.push(masks[t - 1].clone());
                    }
                }
            }
        }
        Strategy::RegisterToPrevious => {
            let mut links: Vec<BSplineFFD> = Vec::with_capacity(n - 1);
            for t in 1..n {
                let t0 = Instant::now();
                match register(&seq.frames[t], &seq.frames[t - 1], cfg) {
                    Ok((tf, _)) => {
                        links.push(tf);
                        masks.push(warp(&TransformChain { links: &links }));
                    }
                    Err(e) => {
                        failures.push(FrameFailure {
                            frame: t,
                            message: e.to_string(),
                        });
                        // Treat the frame as unmoved so later links stay aligned.
                        let domain = geometry.domain();
                        let spacing = Vec2::new(cfg.control_spacing_mm, cfg.control_spacing_mm);
                        links.push(BSplineFFD::identity(domain, spacing)?);
                        masks.push(masks[t - 1].clone());
                    }
                }
                per_frame_ms[t] = ms_since(t0);
            }
        }
    }

    let budget_violations = match budget_ms {
        Some(b) => {
            let per_frame = b / (n - 1) as f64;
            (1..n).filter(|&t| per_frame_ms[t] > per_frame).collect()
        }
        None => Vec::new(),
    };
    Ok(TrackingResult {
        case_id: seq.case_id.clone(),
        masks,
        per_frame_ms,
        total_ms: ms_since(start),
        strategy,
        mode,
        budget_ms,
        budget_violations,
        failures,
        timings_redacted: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    /// Number of timed frames (all but frame 0).
    pub frames: usize,
    pub mean_ms: f64,
    pub median_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
    pub total_ms: f64,
    pub budget_ms: Option<f64>,
    /// `total_ms < budget_ms`, strictly; `None` without a budget or when
    /// timings were redacted.
    pub within_budget: Option<bool>,
    /// `1000 / p95_ms`: the frame rate the method could sustain; `None` when
    /// no time was measured.
    pub effective_rate_hz: Option<f64>,
}

/// Latency statistics over frames `t >= 1` of a tracking result.
pub fn latency_report(r: &TrackingResult, budget_ms: Option<f64>) -> LatencySummary {
    latency_summary(&r.per_frame_ms, r.total_ms, budget_ms, r.timings_redacted)
}

/// Latency statistics from raw timings; `per_frame_ms[0]` is ignored.
pub fn latency_summary(
    per_frame_ms: &[f64],
    total_ms: f64,
    budget_ms: Option<f64>,
    redacted: bool,
) -> LatencySummary {
    let times: Vec<f64> = per_frame_ms.iter().skip(1).copied().collect();
    let n = times.len();
    let (mean, median, p95, max) = if n == 0 {
        (0.0, 0.0, 0.0, 0.0)
    } else {
        (
            times.iter().sum::<f64>() / n as f64,
            percentile(&times, 50.0),
            percentile(&times, 95.0),
            times.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        )
    };
    LatencySummary {
        frames: n,
        mean_ms: mean,
        median_ms: median,
        p95_ms: p95,
        max_ms: max,
        total_ms,
        budget_ms,
        within_budget: budget_ms.filter(|_| !redacted).map(|b| total_ms < b),
        effective_rate_hz: (p95 > 0.0).then(|| 1000.0 / p95),
    }
}
