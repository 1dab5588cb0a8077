#![allow(dead_code)]

use cinetrack::grid::{Geometry, Image2D, Mask2D, Vec2};
use cinetrack::synth::PhantomSpec;
use rand::Rng;

/// Smooth textured test image, shifted by `d` mm.
pub fn textured(g: Geometry, d: Vec2) -> Image2D {
    Image2D::from_fn(g, |p| {
        let (x, y) = (p.x - d.x, p.y - d.y);
        50.0 + 20.0 * (x / 7.0).sin() * (y / 9.0).cos() + 10.0 * ((x + y) / 13.0).cos() + 0.05 * x
    })
    .unwrap()
}

/// Small, fast phantom for tracker and CLI tests.
pub fn small_spec(frames: usize, seed: u64) -> PhantomSpec {
    let mut spec = PhantomSpec {
        image_size: (96, 96),
        n_frames: frames,
        seed,
        case_id: format!("small{seed}"),
        ..PhantomSpec::default()
    };
    spec.motion.amplitude_mm = 4.0;
    spec
}

/// Random mask on a `w`×`h` grid with the given fill probability.
pub fn random_mask(rng: &mut impl Rng, g: Geometry, fill: f64) -> Mask2D {
    let values = (0..g.len()).map(|_| rng.gen_bool(fill) as u8).collect();
    Mask2D::new(g, values).unwrap()
}

// Brute-force reference metrics, written without any shared code paths.

pub struct Oracle {
    pub dsc: f64,
    pub hd: Option<f64>,
    pub hd95: Option<f64>,
    pub asd: Option<f64>,
    pub cd: Option<f64>,
}

fn on(m: &Mask2D, c: i64, r: i64) -> bool {
    let g = m.geometry();
    c >= 0 && r >= 0 && (c as usize) < g.width && (r as usize) < g.height && m.get(c as usize, r as usize)
}

fn border_points(m: &Mask2D) -> Vec<Vec2> {
    let g = m.geometry();
    let mut out = Vec::new();
    for r in 0..g.height as i64 {
        for c in 0..g.width as i64 {
            if on(m, c, r) && !(on(m, c - 1, r) && on(m, c + 1, r) && on(m, c, r - 1) && on(m, c, r + 1)) {
                out.push(g.point(c as usize, r as usize));
            }
        }
    }
    out
}

fn nearest(p: Vec2, set: &[Vec2]) -> f64 {
    set.iter()
        .map(|q| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min)
}

fn type7(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn mean_point(m: &Mask2D) -> Option<Vec2> {
    let g = m.geometry();
    let (mut sx, mut sy, mut n) = (0.0, 0.0, 0usize);
    for r in 0..g.height {
        for c in 0..g.width {
            if m.get(c, r) {
                let p = g.point(c, r);
                sx += p.x;
                sy += p.y;
                n += 1;
            }
        }
    }
    (n > 0).then(|| Vec2::new(sx / n as f64, sy / n as f64))
}

pub fn oracle(a: &Mask2D, b: &Mask2D) -> Oracle {
    let (na, nb) = (a.count(), b.count());
    let inter = a.values().iter().zip(b.values()).filter(|(x, y)| **x == 1 && **y == 1).count();
    let dsc = if na + nb == 0 { 1.0 } else { 2.0 * inter as f64 / (na + nb) as f64 };
    if na == 0 || nb == 0 {
        return Oracle { dsc, hd: None, hd95: None, asd: None, cd: None };
    }
    let (ba, bb) = (border_points(a), border_points(b));
    let mut d: Vec<f64> = ba.iter().map(|&p| nearest(p, &bb)).collect();
    d.extend(bb.iter().map(|&p| nearest(p, &ba)));
    d.sort_by(f64::total_cmp);
    let (ca, cb) = (mean_point(a).unwrap(), mean_point(b).unwrap());
    Oracle {
        dsc,
        hd: d.last().copied(),
        hd95: Some(type7(&d, 0.95)),
        asd: Some(d.iter().sum::<f64>() / d.len() as f64),
        cd: Some(((ca.x - cb.x).powi(2) + (ca.y - cb.y).powi(2)).sqrt()),
    }
}

pub fn close(a: Option<f64>, b: Option<f64>, tol: f64) -> bool {
    match (a, b) {
        (Some(x), Some(y)) => (x - y).abs() <= tol,
        (None, None) => true,
        _ => false,
    }
}

pub struct GradientCase {
    pub fixed: Image2D,
    pub moving: Image2D,
    pub states: Vec<cinetrack::bspline::BSplineFFD>,
    pub sample: cinetrack::similarity::MetricSample,
}

/// Textured 64×64 pair with `n_states` random transforms of up to ±2 mm
/// per coefficient and an interior sample set.
pub fn gradient_case(seed: u64, n_states: usize) -> GradientCase {
    use cinetrack::bspline::BSplineFFD;
    use cinetrack::grid::Rect;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let g = Geometry::new(64, 64, Vec2::new(1.0, 1.0), Vec2::new(0.0, 0.0)).unwrap();
    let fixed = textured(g, Vec2::new(0.0, 0.0));
    let moving = textured(g, Vec2::new(1.5, -1.0));
    let t0 = BSplineFFD::identity(g.domain(), Vec2::new(12.0, 12.0)).unwrap();
    let states = (0..n_states)
        .map(|_| {
            let c = (0..t0.num_params()).map(|_| rng.gen_range(-2.0..2.0)).collect();
            t0.with_coefficients(c).unwrap()
        })
        .collect();
    let region = Rect::new(Vec2::new(8.0, 8.0), Vec2::new(55.0, 55.0));
    let sample = cinetrack::similarity::draw_samples(region, 500, seed).unwrap();
    GradientCase { fixed, moving, states, sample }
}

/// Largest relative error between the analytic gradient and central
/// differences over `n_coeffs` random coefficients of each state.
pub fn worst_gradient_error(
    metric: &dyn cinetrack::similarity::SimilarityMetric,
    case: &GradientCase,
    n_coeffs: usize,
    seed: u64,
) -> f64 {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    // A large step keeps cancellation noise well below tiny gradient
    // entries; Richardson extrapolation removes the h² truncation term.
    let h = 0.1;
    let mut worst: f64 = 0.0;
    for t in &case.states {
        let analytic = metric.evaluate(t, &case.sample).unwrap().gradient;
        for _ in 0..n_coeffs {
            let k = rng.gen_range(0..t.num_params());
            let at = |delta: f64| {
                let mut c = t.coefficients().to_vec();
                c[k] += delta;
                metric.evaluate(&t.with_coefficients(c).unwrap(), &case.sample).unwrap().value
            };
            let central = |h: f64| (at(h) - at(-h)) / (2.0 * h);
            let fd = (4.0 * central(h / 2.0) - central(h)) / 3.0;
            let a = analytic[k];
            if a.abs().max(fd.abs()) < 1e-12 {
                continue;
            }
            worst = worst.max((a - fd).abs() / a.abs().max(fd.abs()));
        }
    }
    worst
}

/// Default phantom with frame 1 translated by `shift_mm` along y relative
/// to frame 0 (quarter period of a 4-frame sinusoid).
pub fn shifted_pair(shift_mm: f64, seed: u64) -> cinetrack::synth::SynthCase {
    let mut spec = PhantomSpec { n_frames: 2, seed, ..PhantomSpec::default() };
    spec.motion.amplitude_mm = shift_mm;
    spec.motion.period_frames = 4.0;
    cinetrack::synth::generate(&spec).unwrap()
}

/// Displacement recovered by warping the first mask into frame 1, measured
/// between mask centroids.
pub fn recovered_shift(case: &cinetrack::synth::SynthCase, t: &cinetrack::bspline::BSplineFFD) -> Vec2 {
    let first = &case.sequence.first_mask;
    let warped = cinetrack::registration::warp_mask(first, t, first.geometry());
    warped.centroid().unwrap() - first.centroid().unwrap()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}
