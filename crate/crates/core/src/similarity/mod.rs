//! Similarity metrics over stochastic point samples, with analytic gradients
//! with respect to the transform coefficients.
//!
//! All metrics are minimised. Samples whose mapped position leaves the moving
//! image are skipped and the mean is taken over the remaining ones; fewer than
//! half valid samples is reported as [`Error::DegenerateMetric`].
//!
//! Evaluation is sequential over the sample list, so a given sample and
//! transform always produce bit-identical results.

mod features;
mod intensity;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bspline::BSplineFFD;
use crate::error::{Error, Result};
use crate::grid::{Image2D, Rect, Vec2};

pub use features::{FeatureChannel, FeatureConfig, FeatureMsd, FeatureProvider};
pub use intensity::{Msd, Ncc};

/// Default number of points drawn per optimizer iteration.
pub const DEFAULT_SAMPLES: usize = 500;

/// Points drawn uniformly over the fixed-image region for one evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub points: Vec<Vec2>,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricEval {
    pub value: f64,
    /// One entry per transform coefficient, same layout as
    /// [`BSplineFFD::coefficients`].
    pub gradient: Vec<f64>,
    pub valid_samples: usize,
    /// Upper bound on the largest eigenvalue of the Gauss-Newton Hessian
    /// with respect to the coefficients (Gershgorin row sums); 0 when the
    /// metric does not provide one.
    pub curvature: f64,
}

impl MetricEval {
    pub fn gradient_norm(&self) -> f64 {
        self.gradient.iter().map(|g| g * g).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.value.is_finite() && self.gradient.iter().all(|g| g.is_finite())
    }
}

/// Draws `n` points uniformly over `region`, reproducibly from `seed`.
pub fn draw_samples(region: Rect, n: usize, seed: u64) -> Result<MetricSample> {
    if n == 0 {
        return Err(Error::Config("sample count must be at least 1".into()));
    }
    let ext = region.extent();
    if !(ext.x > 0.0 && ext.y > 0.0) || !ext.is_finite() {
        return Err(Error::Config(format!("empty sampling region {region:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let points = (0..n)
        .map(|_| {
            Vec2::new(
                region.min.x + rng.gen::<f64>() * ext.x,
                region.min.y + rng.gen::<f64>() * ext.y,
            )
        })
        .collect();
    Ok(MetricSample {
        points,
        rng_seed: seed,
    })
}

pub trait SimilarityMetric: Send + Sync {
    fn name(&self) -> &'static str;

    fn evaluate(&self, t: &BSplineFFD, sample: &MetricSample) -> Result<MetricEval>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    #[default]
    Msd,
    Ncc,
    FeatureMsd,
}

impl MetricKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MetricKind::Msd => "msd",
            MetricKind::Ncc => "ncc",
            MetricKind::FeatureMsd => "feature_msd",
        }
    }
}

impl std::str::FromStr for MetricKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "msd" => Ok(MetricKind::Msd),
            "ncc" => Ok(MetricKind::Ncc),
            "feature_msd" | "feature-msd" => Ok(MetricKind::FeatureMsd),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

/// Prepares a metric of the given kind for one fixed/moving pair.
pub fn build_metric(
    kind: MetricKind,
    fixed: &Image2D,
    moving: &Image2D,
) -> Result<Box<dyn SimilarityMetric>> {
    Ok(match kind {
        MetricKind::Msd => Box::new(Msd::new(fixed, moving)),
        MetricKind::Ncc => Box::new(Ncc::new(fixed, moving)),
        MetricKind::FeatureMsd => {
            Box::new(FeatureMsd::new(fixed, moving, &FeatureConfig::default())?)
        }
    })
}

/// Mean squared intensity difference.
pub fn msd(fixed: &Image2D, moving: &Image2D, t: &BSplineFFD, s: &MetricSample) -> Result<MetricEval> {
    Msd::new(fixed, moving).evaluate(t, s)
}

/// Negated normalised cross correlation.
pub fn ncc(fixed: &Image2D, moving: &Image2D, t: &BSplineFFD, s: &MetricSample) -> Result<MetricEval> {
    Ncc::new(fixed, moving).evaluate(t, s)
}

/// Mean squared difference summed over feature channels.
pub fn feature_msd(
    fixed: &Image2D,
    moving: &Image2D,
    t: &BSplineFFD,
    s: &MetricSample,
    config: &FeatureConfig,
) -> Result<MetricEval> {
    FeatureMsd::new(fixed, moving, config)?.evaluate(t, s)
}

pub(crate) fn check_valid_fraction(valid: usize, n: usize) -> Result<()> {
    if valid == 0 || 2 * valid < n {
        return Err(Error::DegenerateMetric(format!(
            "only {valid} of {n} samples map inside the moving image"
        )));
    }
    Ok(())
}
