//! Multi-channel feature metric.
//!
//! Each image is expanded into per-pixel feature channels and the mean
//! squared difference is summed over channels. The default channel set is
//! hand-crafted: Gaussian-smoothed intensity at 1 mm and 4 mm plus the
//! gradient magnitude of each. Any [`FeatureProvider`] can replace it, e.g.
//! one backed by a learned feature extractor.

use serde::{Deserialize, Serialize};

use crate::bspline::BSplineFFD;
use crate::error::{Error, Result};
use crate::filter::{gaussian_smooth_mm, gradient_magnitude};
use crate::grid::Image2D;
use crate::interp::CubicInterpolant;

use super::intensity::msd_channels;
use super::{MetricEval, MetricSample, SimilarityMetric};

/// Produces feature channels sharing the geometry of the input image.
pub trait FeatureProvider {
    fn channels(&self, img: &Image2D) -> Result<Vec<Image2D>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureChannel {
    Raw,
    Smoothed { sigma_mm: f64 },
    GradientMagnitude { sigma_mm: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub channels: Vec<FeatureChannel>,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            channels: vec![
                FeatureChannel::Smoothed { sigma_mm: 1.0 },
                FeatureChannel::Smoothed { sigma_mm: 4.0 },
                FeatureChannel::GradientMagnitude { sigma_mm: 1.0 },
                FeatureChannel::GradientMagnitude { sigma_mm: 4.0 },
            ],
        }
    }
}

impl FeatureConfig {
    pub fn raw() -> Self {
        FeatureConfig {
            channels: vec![FeatureChannel::Raw],
        }
    }
}

impl FeatureProvider for FeatureConfig {
    fn channels(&self, img: &Image2D) -> Result<Vec<Image2D>> {
        if self.channels.is_empty() {
            return Err(Error::Config("feature config has no channels".into()));
        }
        self.channels
            .iter()
            .map(|ch| match *ch {
                FeatureChannel::Raw => Ok(img.clone()),
                FeatureChannel::Smoothed { sigma_mm } => gaussian_smooth_mm(img, sigma_mm),
                FeatureChannel::GradientMagnitude { sigma_mm } => {
                    gradient_magnitude(&gaussian_smooth_mm(img, sigma_mm)?)
                }
            })
            .collect()
    }
}

pub struct FeatureMsd {
    fixed: Vec<CubicInterpolant>,
    moving: Vec<CubicInterpolant>,
}

impl FeatureMsd {
    pub fn new(fixed: &Image2D, moving: &Image2D, provider: &dyn FeatureProvider) -> Result<Self> {
        let fc = provider.channels(fixed)?;
        let mc = provider.channels(moving)?;
        if fc.len() != mc.len() || fc.is_empty() {
            return Err(Error::Config(format!(
                "feature provider returned {} fixed and {} moving channels",
                fc.len(),
                mc.len()
            )));
        }
        for (c, img) in fc.iter().enumerate() {
            img.geometry().ensure_same(fixed.geometry(), &format!("fixed feature channel {c}"))?;
        }
        for (c, img) in mc.iter().enumerate() {
            img.geometry().ensure_same(moving.geometry(), &format!("moving feature channel {c}"))?;
        }
        Ok(FeatureMsd {
            fixed: fc.iter().map(Image2D::cubic).collect(),
            moving: mc.iter().map(Image2D::cubic).collect(),
        })
    }

    pub fn channel_count(&self) -> usize {
        self.fixed.len()
    }
}

impl SimilarityMetric for FeatureMsd {
    fn name(&self) -> &'static str {
        "feature_msd"
    }

    fn evaluate(&self, t: &BSplineFFD, sample: &MetricSample) -> Result<MetricEval> {
        msd_channels(&self.fixed, &self.moving, t, sample)
    }
}
