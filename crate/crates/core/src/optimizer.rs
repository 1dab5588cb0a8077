//! Stochastic gradient descent with a decaying step schedule.
//!
//! `μ_{k+1} = μ_k - γ(k) g_k` with `γ(k) = a / (k + A)^α`. When `a` is not
//! given it is calibrated from the first evaluation so that the first update
//! has Euclidean norm `max_step_mm` (`δ`), capped by the metric's curvature
//! bound `κ`: `a = A^α min(δ / ‖g_0‖, 1 / κ)`. Without the cap an almost
//! aligned pair, whose first gradient is mostly sampling noise, would get an
//! unbounded step.

use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bspline::BSplineFFD;
use crate::error::{Error, Result};
use crate::similarity::MetricEval;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub iterations_per_level: usize,
    pub levels: usize,
    /// Step numerator `a`; `None` calibrates it from the first gradient.
    pub step_a: Option<f64>,
    /// Step offset `A`.
    pub step_offset: f64,
    /// Decay exponent `α`.
    pub step_alpha: f64,
    /// Norm of the first coefficient update under automatic calibration, in
    /// mm. Registration sets it to the level's pixel spacing.
    pub max_step_mm: f64,
    pub seed: u64,
    /// Stop early once the gradient norm drops below this value.
    pub gradient_tolerance: Option<f64>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            iterations_per_level: 200,
            levels: 2,
            step_a: None,
            step_offset: 20.0,
            step_alpha: 0.602,
            max_step_mm: 1.0,
            seed: 0,
            gradient_tolerance: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.iterations_per_level == 0 || self.levels == 0 {
            return bad("iterations_per_level and levels must be at least 1");
        }
        if let Some(a) = self.step_a {
            if !(a > 0.0 && a.is_finite()) {
                return bad("step_a must be positive");
            }
        }
        if !(self.step_offset >= 1.0) {
            return bad("step offset A must be at least 1");
        }
        if !(self.step_alpha > 0.5 && self.step_alpha <= 1.0) {
            return bad("step exponent alpha must lie in (0.5, 1]");
        }
        if !(self.max_step_mm > 0.0) {
            return bad("max_step_mm must be positive");
        }
        Ok(())
    }

    pub fn step_size(&self, a: f64, k: usize) -> f64 {
        a / (k as f64 + self.step_offset).powf(self.step_alpha)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub value: f64,
    pub grad_norm: f64,
    pub step: f64,
    pub ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Trace {
    pub records: Vec<IterationRecord>,
}

impl Trace {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.value)
    }

    pub fn total_ms(&self) -> f64 {
        self.records.iter().map(|r| r.ms).sum()
    }

    /// CSV with columns `iteration,value,grad_norm,step,ms`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "value", "grad_norm", "step", "ms"])?;
        for r in &self.records {
            w.write_record([
                r.iteration.to_string(),
                r.value.to_string(),
                r.grad_norm.to_string(),
                r.step.to_string(),
                r.ms.to_string(),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<trace>", e))?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(f))
    }
}

/// Optimisation stopped early; carries the trace up to the failure.
#[derive(Debug, Error)]
#[error("optimization aborted at iteration {iteration}: {source}")]
pub struct OptimizeError {
    pub iteration: usize,
    #[source]
    pub source: Error,
    pub trace: Trace,
}

/// Runs the descent for one resolution level.
///
/// `objective(t, k)` evaluates the metric at iteration `k`; it is expected
/// to draw a fresh sample per call.
pub fn optimize<F>(
    mut objective: F,
    t0: BSplineFFD,
    cfg: &OptimizerConfig,
) -> std::result::Result<(BSplineFFD, Trace), OptimizeError>
where
    F: FnMut(&BSplineFFD, usize) -> Result<MetricEval>,
{
    let mut trace = Trace::default();
    if let Err(e) = cfg.validate() {
        return Err(OptimizeError {
            iteration: 0,
            source: e,
            trace,
        });
    }
    let mut t = t0;
    let mut a = cfg.step_a;
    for k in 0..cfg.iterations_per_level {
        let start = Instant::now();
        let fail = |source: Error, trace: Trace| OptimizeError {
            iteration: k,
            source,
            trace,
        };
        let eval = match objective(&t, k) {
            Ok(e) => e,
            Err(e) => return Err(fail(e, trace)),
        };
        if eval.gradient.len() != t.num_params() {
            let msg = format!(
                "gradient has {} entries, transform has {} coefficients",
                eval.gradient.len(),
                t.num_params()
            );
            return Err(fail(Error::Input(msg), trace));
        }
        if !eval.is_finite() {
            return Err(fail(
                Error::NonFinite(format!("metric value or gradient at iteration {k}")),
                trace,
            ));
        }
        let a = *a.get_or_insert_with(|| {
            let by_step = cfg.max_step_mm / (eval.gradient_norm() + 1e-12);
            let gain = if eval.curvature > 0.0 {
                by_step.min(1.0 / eval.curvature)
            } else {
                by_step
            };
            gain * cfg.step_offset.powf(cfg.step_alpha)
        });
        let step = cfg.step_size(a, k);
        let grad_norm = eval.gradient_norm();
        let coeffs: Vec<f64> = t
            .coefficients()
            .iter()
            .zip(&eval.gradient)
            .map(|(c, g)| c - step * g)
            .collect();
        t = match t.with_coefficients(coeffs) {
            Ok(next) => next,
            Err(e) => return Err(fail(e, trace)),
        };
        trace.records.push(IterationRecord {
            iteration: k,
            value: eval.value,
            grad_norm,
            step,
            ms: start.elapsed().as_secs_f64() * 1e3,
        });
        if cfg.gradient_tolerance.is_some_and(|tol| grad_norm < tol) {
            break;
        }
    }
    Ok((t, trace))
}
