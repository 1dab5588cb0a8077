mod common;

use cinetrack::bspline::BSplineFFD;
use cinetrack::grid::{Geometry, Rect, Vec2};
use cinetrack::similarity::{draw_samples, FeatureConfig, FeatureMsd, MetricSample, Msd, Ncc, SimilarityMetric};
use common::{gradient_case, textured, worst_gradient_error};
use rand::{Rng, SeedableRng};

#[test]
fn msd_gradient_matches_central_differences() {
    let case = gradient_case(1, 5);
    let e = worst_gradient_error(&Msd::new(&case.fixed, &case.moving), &case, 20, 7);
    assert!(e < 1e-4, "relative error {e}");
}

#[test]
fn ncc_gradient_matches_central_differences() {
    let case = gradient_case(2, 5);
    let e = worst_gradient_error(&Ncc::new(&case.fixed, &case.moving), &case, 20, 8);
    assert!(e < 1e-4, "relative error {e}");
}

#[test]
fn feature_msd_gradient_matches_central_differences() {
    let case = gradient_case(3, 5);
    let m = FeatureMsd::new(&case.fixed, &case.moving, &FeatureConfig::default()).unwrap();
    let e = worst_gradient_error(&m, &case, 20, 9);
    assert!(e < 1e-4, "relative error {e}");
}

#[test]
fn value_ranges_hold() {
    let case = gradient_case(4, 5);
    let (msd, ncc) = (Msd::new(&case.fixed, &case.moving), Ncc::new(&case.fixed, &case.moving));
    for t in &case.states {
        assert!(msd.evaluate(t, &case.sample).unwrap().value >= 0.0);
        let v = ncc.evaluate(t, &case.sample).unwrap().value;
        assert!((-1.0..=0.0).contains(&v), "ncc {v}");
    }
}

#[test]
fn sample_order_does_not_change_the_value() {
    let case = gradient_case(5, 1);
    let mut reversed = case.sample.clone();
    reversed.points.reverse();
    let metrics: Vec<Box<dyn SimilarityMetric>> = vec![
        Box::new(Msd::new(&case.fixed, &case.moving)),
        Box::new(Ncc::new(&case.fixed, &case.moving)),
        Box::new(FeatureMsd::new(&case.fixed, &case.moving, &FeatureConfig::default()).unwrap()),
    ];
    for m in &metrics {
        let a = m.evaluate(&case.states[0], &case.sample).unwrap().value;
        let b = m.evaluate(&case.states[0], &reversed).unwrap().value;
        assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0), "{}: {a} vs {b}", m.name());
    }
}

#[test]
fn identity_is_the_minimum_for_identical_images() {
    let g = Geometry::new(64, 64, Vec2::new(1.0, 1.0), Vec2::new(0.0, 0.0)).unwrap();
    let img = textured(g, Vec2::new(0.0, 0.0));
    let t0 = BSplineFFD::identity(g.domain(), Vec2::new(12.0, 12.0)).unwrap();
    let sample = draw_samples(Rect::new(Vec2::new(8.0, 8.0), Vec2::new(55.0, 55.0)), 500, 3).unwrap();
    let metrics: Vec<Box<dyn SimilarityMetric>> = vec![
        Box::new(Msd::new(&img, &img)),
        Box::new(Ncc::new(&img, &img)),
        Box::new(FeatureMsd::new(&img, &img, &FeatureConfig::default()).unwrap()),
    ];
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
    for m in &metrics {
        let base = m.evaluate(&t0, &sample).unwrap().value;
        for _ in 0..50 {
            let mut c: Vec<f64> = (0..t0.num_params()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            let scale = rng.gen_range(0.0..1.0) / norm;
            c.iter_mut().for_each(|v| *v *= scale);
            let v = m.evaluate(&t0.with_coefficients(c).unwrap(), &sample).unwrap().value;
            assert!(v >= base - 1e-12, "{}: {v} < {base}", m.name());
        }
    }
}

#[test]
fn mostly_invalid_samples_are_degenerate() {
    let case = gradient_case(6, 0);
    let t = BSplineFFD::uniform(case.fixed.geometry().domain(), Vec2::new(12.0, 12.0), Vec2::new(45.0, 0.0)).unwrap();
    let err = Msd::new(&case.fixed, &case.moving).evaluate(&t, &case.sample).unwrap_err();
    assert!(matches!(err, cinetrack::Error::DegenerateMetric(_)), "{err}");
}

#[test]
fn identical_seeds_give_identical_samples() {
    let r = Rect::new(Vec2::new(0.0, 0.0), Vec2::new(10.0, 10.0));
    let a: MetricSample = draw_samples(r, 100, 42).unwrap();
    assert_eq!(a, draw_samples(r, 100, 42).unwrap());
    assert_ne!(a, draw_samples(r, 100, 43).unwrap());
}
