use crate::bspline::{BSplineFFD, Stencil};
use crate::error::{Error, Result};
use crate::grid::{Image2D, Vec2};
use crate::interp::CubicInterpolant;

use super::{check_valid_fraction, MetricEval, MetricSample, SimilarityMetric};

/// Mean squared difference, summed over paired channels.
///
/// `value = Σ_c mean_p (F_c(p) - M_c(T(p)))²`, and the gradient follows the
/// chain rule through `∇M_c(T(p))` and the transform stencil at `p`.
pub(crate) fn msd_channels(
    fixed: &[CubicInterpolant],
    moving: &[CubicInterpolant],
    t: &BSplineFFD,
    sample: &MetricSample,
) -> Result<MetricEval> {
    let n_nodes = t.num_nodes();
    let mut gradient = vec![0.0; 2 * n_nodes];
    let mut value = 0.0;
    let mut valid = 0usize;
    // Per-sample coefficient of the stencil weights, accumulated before the
    // mean is known.
    let mut contributions: Vec<(Stencil, Vec2, f64)> = Vec::with_capacity(sample.points.len());

    for &p in &sample.points {
        let Some(stencil) = t.stencil(p) else { continue };
        let q = p + t.displacement_with(&stencil);
        let mut sq = 0.0;
        let mut dir = Vec2::ZERO;
        let mut grad_sq = 0.0;
        let mut inside = true;
        for (f, m) in fixed.iter().zip(moving) {
            let Some((mv, mg)) = m.eval(q) else {
                inside = false;
                break;
            };
            let fv = f.eval(p).map_or(0.0, |(v, _)| v);
            let diff = fv - mv;
            sq += diff * diff;
            dir = dir + mg * diff;
            grad_sq += mg.dot(mg);
        }
        if !inside {
            continue;
        }
        valid += 1;
        value += sq;
        contributions.push((stencil, dir, grad_sq));
    }
    check_valid_fraction(valid, sample.points.len())?;

    let scale = -2.0 / valid as f64;
    let mut row_sums = vec![0.0; n_nodes];
    for (stencil, dir, grad_sq) in &contributions {
        for (&node, &w) in stencil.nodes.iter().zip(&stencil.weights) {
            gradient[node] += scale * dir.x * w;
            gradient[node + n_nodes] += scale * dir.y * w;
            row_sums[node] += grad_sq * w;
        }
    }
    Ok(MetricEval {
        value: value / valid as f64,
        gradient,
        valid_samples: valid,
        curvature: 2.0 / valid as f64 * row_sums.iter().fold(0.0, |m: f64, &r| m.max(r)),
    })
}

pub struct Msd {
    fixed: CubicInterpolant,
    moving: CubicInterpolant,
}

impl Msd {
    pub fn new(fixed: &Image2D, moving: &Image2D) -> Self {
        Msd {
            fixed: fixed.cubic(),
            moving: moving.cubic(),
        }
    }
}

impl SimilarityMetric for Msd {
    fn name(&self) -> &'static str {
        "msd"
    }

    fn evaluate(&self, t: &BSplineFFD, sample: &MetricSample) -> Result<MetricEval> {
        msd_channels(
            std::slice::from_ref(&self.fixed),
            std::slice::from_ref(&self.moving),
            t,
            sample,
        )
    }
}

/// Negated normalised cross correlation, in `[-1, 1]`; `-1` is a perfect
/// (positive affine) intensity match.
pub struct Ncc {
    fixed: CubicInterpolant,
    moving: CubicInterpolant,
}

impl Ncc {
    pub fn new(fixed: &Image2D, moving: &Image2D) -> Self {
        Ncc {
            fixed: fixed.cubic(),
            moving: moving.cubic(),
        }
    }
}

struct NccPoint {
    f: f64,
    m: f64,
    grad: Vec2,
    stencil: Stencil,
}

impl SimilarityMetric for Ncc {
    fn name(&self) -> &'static str {
        "ncc"
    }

    fn evaluate(&self, t: &BSplineFFD, sample: &MetricSample) -> Result<MetricEval> {
        let n_nodes = t.num_nodes();
        let mut pts = Vec::with_capacity(sample.points.len());
        for &p in &sample.points {
            let Some(stencil) = t.stencil(p) else { continue };
            let q = p + t.displacement_with(&stencil);
            let Some((m, grad)) = self.moving.eval(q) else { continue };
            let f = self.fixed.eval(p).map_or(0.0, |(v, _)| v);
            pts.push(NccPoint { f, m, grad, stencil });
        }
        let valid = pts.len();
        check_valid_fraction(valid, sample.points.len())?;

        let n = valid as f64;
        let f_mean = pts.iter().map(|s| s.f).sum::<f64>() / n;
        let m_mean = pts.iter().map(|s| s.m).sum::<f64>() / n;
        let (mut sff, mut smm, mut sfm) = (0.0, 0.0, 0.0);
        for s in &pts {
            let (df, dm) = (s.f - f_mean, s.m - m_mean);
            sff += df * df;
            smm += dm * dm;
            sfm += df * dm;
        }
        let f_scale = pts.iter().map(|s| s.f * s.f).sum::<f64>();
        let m_scale = pts.iter().map(|s| s.m * s.m).sum::<f64>();
        if sff <= 1e-12 * f_scale.max(1e-300) || smm <= 1e-12 * m_scale.max(1e-300) {
            return Err(Error::DegenerateMetric(
                "zero intensity variance over the sample".into(),
            ));
        }
        let denom = (sff * smm).sqrt();
        let corr = sfm / denom;

        // d corr = Σ (f - f̄) dm / denom - corr Σ (m - m̄) dm / smm
        let mut gradient = vec![0.0; 2 * n_nodes];
        let mut row_sums = vec![0.0; n_nodes];
        for s in &pts {
            let coef = (s.f - f_mean) / denom - corr * (s.m - m_mean) / smm;
            let dir = s.grad * (-coef);
            let grad_sq = s.grad.dot(s.grad);
            for (&node, &w) in s.stencil.nodes.iter().zip(&s.stencil.weights) {
                gradient[node] += dir.x * w;
                gradient[node + n_nodes] += dir.y * w;
                row_sums[node] += grad_sq * w;
            }
        }
        // Near a match, -corr is locally ‖P J u‖² / (2 smm) with P a projection.
        Ok(MetricEval {
            value: -corr,
            gradient,
            valid_samples: valid,
            curvature: row_sums.iter().fold(0.0, |m: f64, &r| m.max(r)) / smm,
        })
    }
}
