//! Evaluates each similarity metric at a perturbed transform and checks one
//! gradient entry against a central difference.

use cinetrack::bspline::BSplineFFD;
use cinetrack::grid::{Image2D, Vec2};
use cinetrack::similarity::{build_metric, draw_samples, MetricKind};
use cinetrack::synth::{self, PhantomSpec};

fn main() -> cinetrack::Result<()> {
    let case = synth::generate(&PhantomSpec { image_size: (96, 96), n_frames: 3, seed: 2, ..Default::default() })?;
    let (fixed, moving): (&Image2D, &Image2D) = (&case.sequence.frames[2], &case.sequence.frames[0]);
    let domain = fixed.geometry().domain();
    let t = BSplineFFD::uniform(domain, Vec2::new(16.0, 16.0), Vec2::new(0.0, 1.5))?;
    let sample = draw_samples(domain, 2000, 9)?;
    let k = t.num_nodes() + t.num_nodes() / 2;
    let h = 0.05;

    for kind in [MetricKind::Msd, MetricKind::Ncc, MetricKind::FeatureMsd] {
        let metric = build_metric(kind, fixed, moving)?;
        let eval = metric.evaluate(&t, &sample)?;
        let nudge = |d: f64| {
            let mut c = t.coefficients().to_vec();
            c[k] += d;
            metric.evaluate(&t.with_coefficients(c).unwrap(), &sample).map(|e| e.value)
        };
        let fd = (nudge(h)? - nudge(-h)?) / (2.0 * h);
        println!(
            "{:<12} value {:>10.4}  |grad| {:.3e}  dV/dc[{k}] analytic {:+.4e}  numeric {:+.4e}",
            kind.as_str(),
            eval.value,
            eval.gradient_norm(),
            eval.gradient[k],
            fd,
        );
    }
    Ok(())
}
