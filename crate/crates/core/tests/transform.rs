mod common;

use cinetrack::bspline::BSplineFFD;
use cinetrack::grid::{Geometry, Image2D, Rect, Vec2};
use cinetrack::pyramid::build_pyramid;
use proptest::prelude::*;

fn domain() -> Rect {
    Rect::new(Vec2::new(-10.0, 5.0), Vec2::new(70.0, 64.0))
}

fn ffd(coeffs: &[f64]) -> BSplineFFD {
    let t = BSplineFFD::identity(domain(), Vec2::new(12.0, 9.0)).unwrap();
    let c = (0..t.num_params()).map(|i| coeffs[i % coeffs.len()]).collect();
    t.with_coefficients(c).unwrap()
}

fn interior_point() -> impl Strategy<Value = Vec2> {
    (-10.0f64..70.0, 5.0f64..64.0).prop_map(|(x, y)| Vec2::new(x, y))
}

fn coeffs() -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-5.0f64..5.0, 1..200)
}

proptest! {
    #[test]
    fn stencil_weights_sum_to_one(p in interior_point()) {
        let s = ffd(&[0.0]).point_jacobian(p).unwrap();
        prop_assert!((s.weight_sum() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_coefficients_are_the_identity(p in interior_point()) {
        prop_assert_eq!(ffd(&[0.0]).transform_point(p).unwrap(), p);
    }

    #[test]
    fn superposition_holds(a in coeffs(), b in coeffs(), p in interior_point()) {
        let (ta, tb) = (ffd(&a), ffd(&b));
        let sum: Vec<f64> = ta.coefficients().iter().zip(tb.coefficients()).map(|(x, y)| x + y).collect();
        let tab = ta.with_coefficients(sum).unwrap();
        let da = ta.transform_point(p).unwrap() - p;
        let db = tb.transform_point(p).unwrap() - p;
        let dab = tab.transform_point(p).unwrap() - p;
        prop_assert!((dab - (da + db)).norm() < 1e-10);
    }

    #[test]
    fn uniform_translation_is_reproduced(dx in -8.0f64..8.0, dy in -8.0f64..8.0, p in interior_point()) {
        let d = Vec2::new(dx, dy);
        let t = BSplineFFD::uniform(domain(), Vec2::new(12.0, 9.0), d).unwrap();
        prop_assert!((t.transform_point(p).unwrap() - (p + d)).norm() < 1e-9);
    }

    #[test]
    fn directional_derivative_matches_stencil(c in coeffs(), dir in coeffs(), p in interior_point()) {
        let t = ffd(&c);
        let v = ffd(&dir);
        let h = 1.0;
        let moved = |sign: f64| {
            let c: Vec<f64> = t.coefficients().iter().zip(v.coefficients()).map(|(a, b)| a + sign * h * b).collect();
            t.with_coefficients(c).unwrap().transform_point(p).unwrap()
        };
        // The map is linear in the coefficients, so any step is exact up to
        // rounding; a unit step keeps rounding small.
        let fd = (moved(1.0) - moved(-1.0)) * (0.5 / h);
        let s = t.point_jacobian(p).unwrap();
        let predicted = v.displacement_with(&s);
        prop_assert!((fd - predicted).norm() < 1e-10);
    }

    #[test]
    fn cubic_reproduces_cubic_polynomials(x in 16.0f64..32.0, y in 16.0f64..32.0,
                                          k in proptest::collection::vec(-4i32..=4, 6)) {
        // The mirror boundary transient decays like 0.27^k, hence the 16 px
        // margin. Dyadic coefficients keep every sample exact in f32.
        let k: Vec<f64> = k.into_iter().map(|n| n as f64 / 4.0).collect();
        let g = Geometry::new(48, 48, Vec2::new(1.0, 1.0), Vec2::new(0.0, 0.0)).unwrap();
        let f = |p: Vec2| {
            let (u, v) = (p.x / 8.0, p.y / 8.0);
            k[0] + k[1] * u + k[2] * v * v + k[3] * u * u * u + k[4] * u * v * v + k[5] * v * v * v
        };
        let img = Image2D::from_fn(g, f).unwrap();
        let p = Vec2::new(x, y);
        prop_assert!((img.cubic().sample(p).unwrap() - f(p)).abs() < 1e-6);
    }

    #[test]
    fn cubic_gradient_matches_finite_differences(x in 2.6f64..24.2, y in 0.4f64..23.2) {
        let g = Geometry::new(32, 24, Vec2::new(0.8, 1.2), Vec2::new(1.0, -2.0)).unwrap();
        let img = common::textured(g, Vec2::new(0.0, 0.0));
        let c = img.cubic();
        let p = Vec2::new(x, y);
        let h = 1e-3;
        let fx = (c.sample(Vec2::new(x + h, y)).unwrap() - c.sample(Vec2::new(x - h, y)).unwrap()) / (2.0 * h);
        let fy = (c.sample(Vec2::new(x, y + h)).unwrap() - c.sample(Vec2::new(x, y - h)).unwrap()) / (2.0 * h);
        let grad = c.gradient(p).unwrap();
        let scale = grad.norm().max(1.0);
        prop_assert!((grad.x - fx).abs() / scale < 1e-4 && (grad.y - fy).abs() / scale < 1e-4, "{grad:?} vs ({fx}, {fy})");
    }

    #[test]
    fn constants_are_reproduced(v in -100.0f32..100.0, x in 2.0f64..13.0, y in 2.0f64..9.0) {
        let g = Geometry::new(16, 12, Vec2::new(1.0, 1.0), Vec2::new(0.0, 0.0)).unwrap();
        let img = Image2D::filled(g, v).unwrap();
        let p = Vec2::new(x, y);
        prop_assert!((img.sample_linear(p).unwrap() - v as f64).abs() < 1e-9);
        prop_assert!((img.cubic().sample(p).unwrap() - v as f64).abs() < 1e-9);
    }

    #[test]
    fn pyramid_keeps_physical_extent(w in 8usize..80, h in 8usize..80, levels in 1usize..4) {
        let g = Geometry::new(w, h, Vec2::new(1.1, 0.9), Vec2::new(0.0, 0.0)).unwrap();
        prop_assume!(w.min(h) >> (levels - 1) >= 8);
        let img = Image2D::filled(g, 1.0).unwrap();
        let pyr = build_pyramid(&img, levels).unwrap();
        prop_assert_eq!(pyr.len(), levels);
        for lvl in &pyr {
            let lg = lvl.geometry();
            let e = Vec2::new(lg.width as f64 * lg.spacing.x, lg.height as f64 * lg.spacing.y);
            let full = Vec2::new(w as f64 * 1.1, h as f64 * 0.9);
            prop_assert!((e.x - full.x).abs() <= lg.spacing.x + 1e-9 && (e.y - full.y).abs() <= lg.spacing.y + 1e-9);
        }
    }
}

#[test]
fn dyadic_upsampling_is_exact_for_random_transforms() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let coarse = BSplineFFD::identity(domain(), Vec2::new(24.0, 18.0)).unwrap();
    let c = (0..coarse.num_params()).map(|_| rng.gen_range(-4.0..4.0)).collect();
    let coarse = coarse.with_coefficients(c).unwrap();
    let fine = coarse.upsample_to(domain(), Vec2::new(12.0, 9.0)).unwrap();
    for _ in 0..200 {
        let p = Vec2::new(rng.gen_range(-10.0..70.0), rng.gen_range(5.0..64.0));
        let d = (fine.transform_point(p).unwrap() - coarse.transform_point(p).unwrap()).norm();
        assert!(d < 1e-9, "{d}");
    }
}
