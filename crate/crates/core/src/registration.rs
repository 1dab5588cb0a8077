//! Pairwise coarse-to-fine B-spline registration and mask warping.
//!
//! The transform maps points of the fixed image into the moving image. For
//! tracking, the fixed image is the current frame and the moving image the
//! annotated first frame, so the first mask is pulled into the current frame
//! without inverting anything.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bspline::BSplineFFD;
use crate::error::{Error, Result};
use crate::grid::{Geometry, Image2D, Mask2D, Vec2};
use crate::optimizer::{optimize, OptimizerConfig, Trace};
use crate::pyramid::build_pyramid;
use crate::similarity::{build_metric, draw_samples, MetricEval, MetricKind, DEFAULT_SAMPLES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Profile {
    /// Two levels, 200 iterations, 500 samples, 12 mm control spacing.
    Quality,
    /// One level, 50 iterations, 250 samples, 24 mm control spacing.
    Realtime,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "quality" => Ok(Profile::Quality),
            "realtime" | "real-time" => Ok(Profile::Realtime),
            other => Err(Error::Config(format!("unknown profile `{other}`"))),
        }
    }
}

impl Profile {
    pub fn as_str(self) -> &'static str {
        match self {
            Profile::Quality => "quality",
            Profile::Realtime => "realtime",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationConfig {
    /// Control-point spacing at the finest level; each coarser level doubles it.
    pub control_spacing_mm: f64,
    pub levels: usize,
    pub iterations_per_level: usize,
    pub samples_per_iteration: usize,
    pub metric: MetricKind,
    pub seed: u64,
    pub profile: Profile,
    pub step_a: Option<f64>,
    pub step_offset: f64,
    pub step_alpha: f64,
    /// Weight of the coefficient-space bending penalty.
    pub bending_weight: f64,
    /// Resampled mask values at or above this are foreground.
    pub mask_threshold: f64,
    pub gradient_tolerance: Option<f64>,
}

impl Default for RegistrationConfig {
    fn default() -> Self {
        Self::quality()
    }
}

impl RegistrationConfig {
    pub fn quality() -> Self {
        let opt = OptimizerConfig::default();
        RegistrationConfig {
            control_spacing_mm: 12.0,
            levels: 2,
            iterations_per_level: 200,
            samples_per_iteration: DEFAULT_SAMPLES,
            metric: MetricKind::Msd,
            seed: 0,
            profile: Profile::Quality,
            step_a: None,
            step_offset: opt.step_offset,
            step_alpha: opt.step_alpha,
            bending_weight: 0.0,
            mask_threshold: 0.5,
            gradient_tolerance: None,
        }
    }

    pub fn realtime() -> Self {
        RegistrationConfig {
            control_spacing_mm: 24.0,
            levels: 1,
            iterations_per_level: 50,
            samples_per_iteration: 250,
            profile: Profile::Realtime,
            ..Self::quality()
        }
    }

    pub fn for_profile(profile: Profile) -> Self {
        match profile {
            Profile::Quality => Self::quality(),
            Profile::Realtime => Self::realtime(),
        }
    }

    /// `levels × iterations × samples`: the number of metric sample
    /// evaluations one registration performs.
    pub fn total_work(&self) -> usize {
        self.levels * self.iterations_per_level * self.samples_per_iteration
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.control_spacing_mm > 0.0) {
            return Err(Error::Config("control spacing must be positive".into()));
        }
        if self.samples_per_iteration == 0 {
            return Err(Error::Config("samples_per_iteration must be at least 1".into()));
        }
        if !(self.bending_weight >= 0.0) {
            return Err(Error::Config("bending weight must be non-negative".into()));
        }
        if !(self.mask_threshold > 0.0 && self.mask_threshold <= 1.0) {
            return Err(Error::Config("mask threshold must lie in (0, 1]".into()));
        }
        self.optimizer(0, 1.0).validate()
    }

    fn optimizer(&self, level_seed: u64, max_step_mm: f64) -> OptimizerConfig {
        OptimizerConfig {
            iterations_per_level: self.iterations_per_level,
            levels: self.levels,
            step_a: self.step_a,
            step_offset: self.step_offset,
            step_alpha: self.step_alpha,
            max_step_mm,
            seed: level_seed,
            gradient_tolerance: self.gradient_tolerance,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelReport {
    /// 0 is the finest level.
    pub level: usize,
    pub image_size: (usize, usize),
    pub pixel_spacing: Vec2,
    pub control_spacing: Vec2,
    pub control_dims: (usize, usize),
    /// Metric preparation and transform initialisation / upsampling.
    pub setup_ms: f64,
    pub optimize_ms: f64,
    pub trace: Trace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegistrationReport {
    pub metric: MetricKind,
    pub profile: Profile,
    pub pyramid_ms: f64,
    /// Coarsest level first, in execution order.
    pub levels: Vec<LevelReport>,
    pub total_ms: f64,
    pub failure: Option<String>,
}

impl RegistrationReport {
    /// Sum of the individually timed stages.
    pub fn accounted_ms(&self) -> f64 {
        self.pyramid_ms
            + self
                .levels
                .iter()
                .map(|l| l.setup_ms + l.optimize_ms)
                .sum::<f64>()
    }

    pub fn iterations(&self) -> usize {
        self.levels.iter().map(|l| l.trace.len()).sum()
    }
}

#[derive(Debug, Error)]
#[error("registration failed: {source}")]
pub struct RegistrationError {
    #[source]
    pub source: Error,
    pub report: RegistrationReport,
}

/// Mixes a base seed with level and iteration indices (SplitMix64 finaliser).
pub fn derive_seed(base: u64, level: u64, iteration: u64) -> u64 {
    let mut z = base
        .wrapping_add(level.wrapping_mul(0x9e37_79b9_7f4a_7c15))
        .wrapping_add(iteration.wrapping_mul(0xbf58_476d_1ce4_e5b9))
        .wrapping_add(0x94d0_49bb_1331_11eb);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Registers `moving` onto `fixed`, coarse to fine.
///
/// The returned transform is defined over the fixed image's pixel-centre
/// domain and maps fixed-image points into the moving image.
pub fn register(
    fixed: &Image2D,
    moving: &Image2D,
    cfg: &RegistrationConfig,
) -> std::result::Result<(BSplineFFD, RegistrationReport), RegistrationError> {
    let start = Instant::now();
    let mut report = RegistrationReport {
        metric: cfg.metric,
        profile: cfg.profile,
        pyramid_ms: 0.0,
        levels: Vec::new(),
        total_ms: 0.0,
        failure: None,
    };
    let fail = |source: Error, mut report: RegistrationReport| {
        report.failure = Some(source.to_string());
        report.total_ms = ms_since(start);
        RegistrationError { source, report }
    };

    if let Err(e) = cfg.validate() {
        return Err(fail(e, report));
    }
    let t_pyr = Instant::now();
    let pyramids = build_pyramid(fixed, cfg.levels).and_then(|f| Ok((f, build_pyramid(moving, cfg.levels)?)));
    let (fixed_pyr, moving_pyr) = match pyramids {
        Ok(p) => p,
        Err(e) => return Err(fail(e, report)),
    };
    report.pyramid_ms = ms_since(t_pyr);

    let domain = fixed.geometry().domain();
    let mut current: Option<BSplineFFD> = None;
    for level in (0..cfg.levels).rev() {
        let t_setup = Instant::now();
        let f_img = &fixed_pyr[level];
        let m_img = &moving_pyr[level];
        let scale = (1u64 << level) as f64;
        let spacing = Vec2::new(cfg.control_spacing_mm * scale, cfg.control_spacing_mm * scale);
        let t0 = match current.take() {
            None => BSplineFFD::identity(domain, spacing),
            Some(prev) => prev.upsample_to(domain, spacing),
        };
        let t0 = match t0 {
            Ok(t) => t,
            Err(e) => return Err(fail(e, report)),
        };
        let metric = match build_metric(cfg.metric, f_img, m_img) {
            Ok(m) => m,
            Err(e) => return Err(fail(e, report)),
        };
        let region = f_img.geometry().domain();
        let px = f_img.geometry().spacing;
        let opt_cfg = cfg.optimizer(derive_seed(cfg.seed, level as u64, u64::MAX), px.x.min(px.y));
        let control_dims = t0.control_dims();
        let setup_ms = ms_since(t_setup);

        let t_opt = Instant::now();
        let objective = |t: &BSplineFFD, k: usize| -> Result<MetricEval> {
            let seed = derive_seed(cfg.seed, level as u64, k as u64);
            let sample = draw_samples(region, cfg.samples_per_iteration, seed)?;
            let mut eval = metric.evaluate(t, &sample)?;
            if cfg.bending_weight > 0.0 {
                let (be, grad) = t.bending_energy();
                eval.value += cfg.bending_weight * be;
                for (g, b) in eval.gradient.iter_mut().zip(grad) {
                    *g += cfg.bending_weight * b;
                }
            }
            Ok(eval)
        };
        let outcome = optimize(objective, t0, &opt_cfg);
        let optimize_ms = ms_since(t_opt);
        let mut level_report = LevelReport {
            level,
            image_size: (f_img.width(), f_img.height()),
            pixel_spacing: px,
            control_spacing: spacing,
            control_dims,
            setup_ms,
            optimize_ms,
            trace: Trace::default(),
        };
        match outcome {
            Ok((t, trace)) => {
                level_report.trace = trace;
                report.levels.push(level_report);
                current = Some(t);
            }
            Err(e) => {
                level_report.trace = e.trace;
                report.levels.push(level_report);
                return Err(fail(e.source, report));
            }
        }
    }
    report.total_ms = ms_since(start);
    Ok((current.expect("at least one level"), report))
}

/// A point mapping from a target frame into a source frame.
pub trait PointMap: Sync {
    /// `None` when `p` is outside the mapping's domain.
    fn map_point(&self, p: Vec2) -> Option<Vec2>;

    /// Per-axis bound on `|map(p) - p|` over the whole domain, if known.
    fn displacement_bound(&self) -> Option<Vec2> {
        None
    }
}

impl PointMap for BSplineFFD {
    fn map_point(&self, p: Vec2) -> Option<Vec2> {
        self.stencil(p).map(|s| p + self.displacement_with(&s))
    }

    /// The stencil weights are non-negative and sum to one, so each
    /// displacement component is a convex combination of its coefficients.
    fn displacement_bound(&self) -> Option<Vec2> {
        let (x, y) = self.coefficients().split_at(self.num_nodes());
        let max_abs = |c: &[f64]| c.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
        Some(Vec2::new(max_abs(x), max_abs(y)))
    }
}

/// Identity mapping.
pub struct Identity;

impl PointMap for Identity {
    fn map_point(&self, p: Vec2) -> Option<Vec2> {
        Some(p)
    }

    fn displacement_bound(&self) -> Option<Vec2> {
        Some(Vec2::ZERO)
    }
}

/// Resamples `mask` onto `target`: each target pixel centre `p` reads the
/// source mask bilinearly at `map(p)` and is foreground when the value
/// reaches `threshold`. Unmappable or out-of-grid points are background.
pub fn warp_mask_with_threshold(
    mask: &Mask2D,
    map: &(impl PointMap + ?Sized),
    target: &Geometry,
    threshold: f64,
) -> Mask2D {
    let mut out = Mask2D::empty(*target);
    let (cols, rows) = match candidate_window(mask, map, target, threshold) {
        Some(w) => w,
        None => return out,
    };
    for row in rows {
        for col in cols.clone() {
            let p = target.point(col, row);
            let on = map
                .map_point(p)
                .and_then(|q| mask.sample_linear(q).ok())
                .is_some_and(|v| v >= threshold);
            if on {
                out.set(col, row, true);
            }
        }
    }
    out
}

/// Target pixel ranges that can map into the foreground. Bilinear values
/// reach a positive threshold only within one source pixel of a foreground
/// centre, and a known displacement bound widens that box by the bound.
fn candidate_window(
    mask: &Mask2D,
    map: &(impl PointMap + ?Sized),
    target: &Geometry,
    threshold: f64,
) -> Option<(std::ops::Range<usize>, std::ops::Range<usize>)> {
    let all = Some((0..target.width, 0..target.height));
    let bound = match map.displacement_bound() {
        Some(b) if threshold > 0.0 && b.is_finite() => b,
        _ => return all,
    };
    let mut pts = mask.foreground_points();
    let first = pts.next()?;
    let (lo, hi) = pts.fold((first, first), |(lo, hi), p| {
        (Vec2::new(lo.x.min(p.x), lo.y.min(p.y)), Vec2::new(hi.x.max(p.x), hi.y.max(p.y)))
    });
    let pad = mask.geometry().spacing + bound;
    let (lo, hi) = (lo - pad, hi + pad);
    let range = |lo: f64, hi: f64, origin: f64, step: f64, n: usize| {
        let a = ((lo - origin) / step).floor().max(0.0);
        let b = ((hi - origin) / step).ceil() + 1.0;
        (a as usize).min(n)..(b.max(0.0) as usize).min(n)
    };
    Some((
        range(lo.x, hi.x, target.origin.x, target.spacing.x, target.width),
        range(lo.y, hi.y, target.origin.y, target.spacing.y, target.height),
    ))
}

/// [`warp_mask_with_threshold`] at 0.5.
pub fn warp_mask(mask: &Mask2D, map: &(impl PointMap + ?Sized), target: &Geometry) -> Mask2D {
    warp_mask_with_threshold(mask, map, target, 0.5)
}
