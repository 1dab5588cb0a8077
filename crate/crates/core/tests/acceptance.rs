//! Acceptance suite: one pass/fail line per criterion, non-zero exit if any
//! criterion fails. Runs without the libtest harness so the lines are always
//! printed.

mod common;

use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use cinetrack::bspline::BSplineFFD;
use cinetrack::grid::{Geometry, Mask2D, Vec2};
use cinetrack::io::{self, read_metaimage, write_metaimage, ElementType, MetaImage, ReportFormat};
use cinetrack::metrics::{aggregate_cohort, dsc, evaluate_sequence, frame_metrics, MetricsReport};
use cinetrack::registration::{register, RegistrationConfig};
use cinetrack::similarity::{FeatureConfig, FeatureMsd, Msd, Ncc, SimilarityMetric};
use cinetrack::synth::{self, PhantomSpec};
use cinetrack::tracker::{track, track_with_mode, Mode, Strategy};
use cinetrack::Error;
use common::{close, gradient_case, median, oracle, recovered_shift, shifted_pair, worst_gradient_error};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(start: Instant, limit_s: f64, detail: String) -> Outcome {
    let s = start.elapsed().as_secs_f64();
    check(s < limit_s, format!("{detail}; {s:.1} s (limit {limit_s} s)"))
}

// 1

fn random_pair(rng: &mut ChaCha8Rng, i: usize) -> (Mask2D, Mask2D) {
    let (w, h) = (rng.gen_range(1..=12), rng.gen_range(1..=12));
    let g = Geometry::new(w, h, Vec2::new(rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0)), Vec2::new(0.0, 0.0))
        .unwrap();
    let random = |rng: &mut ChaCha8Rng| {
        let fill = rng.gen_range(0.1..0.9);
        common::random_mask(rng, g, fill)
    };
    let single = |rng: &mut ChaCha8Rng| {
        let mut m = Mask2D::empty(g);
        m.set(rng.gen_range(0..w), rng.gen_range(0..h), true);
        m
    };
    // Foreground touching the image border on every side.
    let rim = || Mask2D::from_fn(g, |p| {
        let (c, r) = ((p.x / g.spacing.x).round() as usize, (p.y / g.spacing.y).round() as usize);
        c == 0 || r == 0 || c + 1 == w || r + 1 == h
    })
    .unwrap();
    match i % 8 {
        0 => (Mask2D::empty(g), random(rng)),
        1 => (random(rng), Mask2D::empty(g)),
        2 => (Mask2D::empty(g), Mask2D::empty(g)),
        3 => (single(rng), single(rng)),
        4 => (single(rng), random(rng)),
        5 => (rim(), random(rng)),
        6 => (Mask2D::from_fn(g, |_| true).unwrap(), random(rng)),
        _ => (random(rng), random(rng)),
    }
}

fn metric_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut mismatches = 0;
    for i in 0..500 {
        let (a, b) = random_pair(&mut rng, i);
        let f = frame_metrics(1, &a, &b, 0.0).map_err(|e| e.to_string())?;
        let o = oracle(&a, &b);
        worst = worst.max((f.dsc - o.dsc).abs());
        for (x, y) in [(f.hd, o.hd), (f.hd95, o.hd95), (f.asd, o.asd), (f.cd, o.cd)] {
            if let (Some(x), Some(y)) = (x, y) {
                worst = worst.max((x - y).abs());
            }
            if !close(x, y, 1e-9) {
                mismatches += 1;
            }
        }
    }
    let detail = format!("500 pairs, {mismatches} mismatches, worst deviation {worst:.1e}");
    if mismatches > 0 || worst > 1e-9 {
        return Err(detail);
    }
    within(start, 10.0, detail)
}

// 2

fn dsc_fidelity() -> Outcome {
    let g = Geometry::unit(8, 1);
    let row = |bits: [u8; 8]| Mask2D::new(g, bits.to_vec()).unwrap();
    let a = row([1, 1, 1, 1, 0, 0, 0, 0]);
    let b = row([0, 0, 1, 1, 1, 1, 0, 0]);
    let c = row([0, 0, 0, 0, 0, 0, 1, 1]);
    let got = [dsc(&a, &a), dsc(&a, &b), dsc(&a, &c)].map(|r| r.unwrap());
    check(got == [1.0, 0.5, 0.0], format!("identical {}, overlap-2-of-4 {}, disjoint {}", got[0], got[1], got[2]))
}

// 3

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let case = gradient_case(31, 5);
    let metrics: Vec<Box<dyn SimilarityMetric>> = vec![
        Box::new(Msd::new(&case.fixed, &case.moving)),
        Box::new(Ncc::new(&case.fixed, &case.moving)),
        Box::new(FeatureMsd::new(&case.fixed, &case.moving, &FeatureConfig::default()).unwrap()),
    ];
    let errors: Vec<(String, f64)> = metrics
        .iter()
        .map(|m| (m.name().to_string(), worst_gradient_error(m.as_ref(), &case, 20, 77)))
        .collect();
    let detail = errors.iter().map(|(n, e)| format!("{n} {e:.1e}")).collect::<Vec<_>>().join(", ");
    if errors.iter().any(|(_, e)| *e >= 1e-4) {
        return Err(format!("max relative error: {detail}"));
    }
    within(start, 30.0, format!("max relative error: {detail}"))
}

// 4

fn transform_exactness() -> Outcome {
    let g = Geometry::unit(256, 256);
    let domain = g.domain();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let zero = BSplineFFD::identity(domain, Vec2::new(12.0, 12.0)).unwrap();
    let d = Vec2::new(rng.gen_range(-10.0..10.0), rng.gen_range(-10.0..10.0));
    let shift = BSplineFFD::uniform(domain, Vec2::new(12.0, 12.0), d).unwrap();
    let (mut pu, mut tr, mut id): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..1000 {
        let p = Vec2::new(rng.gen_range(0.0..255.0), rng.gen_range(0.0..255.0));
        pu = pu.max((zero.point_jacobian(p).unwrap().weight_sum() - 1.0).abs());
        tr = tr.max((shift.transform_point(p).unwrap() - (p + d)).norm());
        id = id.max((zero.transform_point(p).unwrap() - p).norm());
    }
    check(
        pu <= 1e-12 && tr <= 1e-9 && id == 0.0,
        format!("partition of unity {pu:.1e}, translation {tr:.1e}, identity {id:.1e} over 1000 points"),
    )
}

// 5

fn registration_recovery() -> Outcome {
    let start = Instant::now();
    let mut errors = Vec::new();
    for seed in 0..5 {
        let case = shifted_pair(5.0, seed);
        let cfg = RegistrationConfig { seed, ..RegistrationConfig::quality() };
        let (t, _) = register(&case.sequence.frames[1], &case.sequence.frames[0], &cfg).map_err(|e| e.to_string())?;
        errors.push((recovered_shift(&case, &t) - case.gt_displacements[1]).norm());
    }
    let m = median(errors.clone());
    let detail = format!("median centroid error {m:.3} mm (per seed {errors:.3?})");
    if m > 0.5 {
        return Err(detail);
    }
    within(start, 120.0, detail)
}

// 6

fn direction_reproduction() -> Outcome {
    let start = Instant::now();
    let (mut base, mut ours) = (Vec::new(), Vec::new());
    for seed in 0..5 {
        let spec = PhantomSpec { seed, case_id: format!("seq{seed}"), ..PhantomSpec::default() };
        let case = synth::generate(&spec).map_err(|e| e.to_string())?;
        let cfg = RegistrationConfig { seed, ..RegistrationConfig::quality() };
        let s = track(&case.sequence, Strategy::Static, &cfg, None).map_err(|e| e.to_string())?;
        let r = track_with_mode(&case.sequence, Strategy::RegisterToFirst, &cfg, None, Mode::Offline)
            .map_err(|e| e.to_string())?;
        base.push(evaluate_sequence(&s, &case.gt_masks, None).map_err(|e| e.to_string())?);
        ours.push(evaluate_sequence(&r, &case.gt_masks, None).map_err(|e| e.to_string())?);
    }
    let (b, o) = (aggregate_cohort(&base).mean, aggregate_cohort(&ours).mean);
    let (bd, od, bh, oh) = (b.dsc.unwrap(), o.dsc.unwrap(), b.hd.unwrap(), o.hd.unwrap());
    let detail = format!(
        "DSC {od:.4} vs static {bd:.4} (need +0.05), HD {oh:.3} mm vs static {bh:.3} mm (need <= 0.7x)"
    );
    if od < bd + 0.05 || oh > 0.7 * bh {
        return Err(detail);
    }
    within(start, 900.0, detail)
}

// 7

fn realtime_tradeoff() -> Outcome {
    let spec = PhantomSpec { n_frames: 9, seed: 7, case_id: "tradeoff".into(), ..PhantomSpec::default() };
    let case = synth::generate(&spec).map_err(|e| e.to_string())?;
    let run = |cfg: RegistrationConfig| track(&case.sequence, Strategy::RegisterToFirst, &cfg, Some(200.0 * 8.0));
    let rt = run(RegistrationConfig::realtime()).map_err(|e| e.to_string())?;
    let q = run(RegistrationConfig::quality()).map_err(|e| e.to_string())?;
    let mean = |v: &[f64]| v[1..].iter().sum::<f64>() / (v.len() - 1) as f64;
    let rt_max = rt.per_frame_ms[1..].iter().copied().fold(0.0, f64::max);
    let ratio = mean(&q.per_frame_ms) / mean(&rt.per_frame_ms);
    let flags_ok = rt.budget_violations.is_empty() == (rt_max <= 200.0);

    // The bench table must show accuracy and latency side by side.
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    io::write_case(tmp.path().join("case"), &case.sequence, Some(&case.gt_masks)).map_err(|e| e.to_string())?;
    let out = Command::new(env!("CARGO_BIN_EXE_cinetrack"))
        .args(["bench", "case", "--out", "bench", "--strategies", "register_to_first"])
        .current_dir(tmp.path())
        .output()
        .map_err(|e| e.to_string())?;
    let table = String::from_utf8_lossy(&out.stdout);
    let header = table.lines().find(|l| l.starts_with("method")).unwrap_or("");
    let columns_ok = ["dsc", "hd_mm", "asd_mm", "cd_mm", "total_ms", "p95_frame_ms", "within_budget"]
        .iter()
        .all(|c| header.contains(c));
    let rows_ok = table.contains("register_to_first/quality") && table.contains("register_to_first/realtime");

    check(
        rt_max < 200.0 && ratio >= 5.0 && flags_ok && columns_ok && rows_ok && out.status.success(),
        format!(
            "realtime max {rt_max:.1} ms/frame (mean {:.1}), quality mean {:.1} ms/frame, ratio {ratio:.1}x; bench table {}",
            mean(&rt.per_frame_ms),
            mean(&q.per_frame_ms),
            if columns_ok && rows_ok { "complete" } else { "incomplete" }
        ),
    )
}

// 8

fn cli(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_cinetrack"))
        .args(args)
        .current_dir(dir)
        .env_remove("CINETRACK_OUT")
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!("{args:?} exited {:?}: {}", out.status.code(), String::from_utf8_lossy(&out.stderr)));
    }
    Ok(String::from_utf8_lossy(&out.stdout).into_owned())
}

fn files_under(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}

fn determinism() -> Outcome {
    let runs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut stdouts = Vec::new();
    for dir in &runs {
        let d = dir.path();
        let common = ["--seed", "42", "--deterministic"];
        let go = |rest: &[&str]| cli(d, &[&common[..], rest].concat());
        let mut s = go(&["synth", "--out", "case", "--frames", "6", "--size", "128", "--amplitude", "5", "--case-id", "det"])?;
        for strategy in ["static", "register_to_first", "register_to_previous"] {
            let out = format!("res-{strategy}");
            s += &go(&["track", "case", "--out", &out, "--strategy", strategy, "--profile", "realtime"])?;
        }
        s += &go(&["eval", "res-register_to_first", "case", "--out", "ev"])?;
        s += &go(&["bench", "case", "--out", "bench", "--profiles", "realtime"])?;
        stdouts.push(s);
    }
    let (a, b) = (runs[0].path(), runs[1].path());
    let files = files_under(a);
    if files != files_under(b) {
        return Err("runs wrote different file sets".into());
    }
    let differing: Vec<_> = files
        .iter()
        .filter(|f| fs::read(a.join(f)).unwrap() != fs::read(b.join(f)).unwrap())
        .collect();
    check(
        differing.is_empty() && stdouts[0] == stdouts[1],
        format!(
            "{} files compared across synth/track/eval/bench, {} differ, stdout {}",
            files.len(),
            differing.len(),
            if stdouts[0] == stdouts[1] { "identical" } else { "differs" }
        ),
    )
}

// 9

fn io_round_trips() -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = tmp.path();
    let g = Geometry::new(5, 3, Vec2::new(0.7, 1.3), Vec2::new(-12.5, 40.25)).unwrap();
    let samples: [(ElementType, Vec<f32>); 3] = [
        (ElementType::UChar, vec![0.0, 1.0, 127.0, 255.0]),
        (ElementType::Short, vec![-32768.0, -1.0, 0.0, 32767.0]),
        (ElementType::Float, vec![-1.5e30, -0.0, 1e-30, 3.25, f32::MAX]),
    ];
    let mut checked = 0;
    for (t, values) in &samples {
        for frames in [1usize, 4] {
            let img = MetaImage {
                geometry: g,
                frames,
                stacked: frames > 1,
                element_type: *t,
                data: (0..g.len() * frames).map(|i| values[i % values.len()]).collect(),
            };
            let p = d.join(format!("{}-{frames}.mha", t.as_str()));
            write_metaimage(&img, &p).map_err(|e| e.to_string())?;
            if read_metaimage(&p).map_err(|e| e.to_string())? != img {
                return Err(format!("{} with {frames} frame(s) did not round-trip", t.as_str()));
            }
            checked += 1;
        }
    }

    let case = synth::generate(&common::small_spec(5, 9)).map_err(|e| e.to_string())?;
    let r = track(&case.sequence, Strategy::RegisterToFirst, &RegistrationConfig::realtime(), Some(500.0))
        .map_err(|e| e.to_string())?;
    let mut report = evaluate_sequence(&r, &case.gt_masks, Some(500.0)).map_err(|e| e.to_string())?;
    report.frames[2].hd = None;
    report.frames[2].valid = false;
    io::write_report(&report, d.join("r.json"), ReportFormat::Json).map_err(|e| e.to_string())?;
    io::write_report(&report, d.join("r.csv"), ReportFormat::Csv).map_err(|e| e.to_string())?;
    let json_ok = io::read_report_json(d.join("r.json")).map_err(|e| e.to_string())? == report;
    let rows = io::read_report_csv(d.join("r.csv")).map_err(|e| e.to_string())?;
    let csv_ok = rows.iter().map(|(_, f)| f).eq(report.frames.iter());
    let from_str_ok = MetricsReport::from_json(&report.to_json().unwrap()).unwrap() == report;

    let header = "ObjectType = Image\nNDims = 2\nDimSize = 2 2\nElementType = MET_UCHAR\nElementDataFile = LOCAL\n";
    let bad = |h: String, payload: usize| {
        let p = d.join("bad.mha");
        let mut bytes = h.into_bytes();
        bytes.extend(std::iter::repeat_n(0u8, payload));
        fs::write(&p, bytes).unwrap();
        read_metaimage(&p)
    };
    let named = [
        matches!(bad(header.replace("NDims = 2\n", "NDims = 2\nMystery = 1\n"), 4), Err(Error::UnknownHeaderKey { .. })),
        matches!(bad(header.replace("DimSize = 2 2\n", ""), 4), Err(Error::MissingHeaderKey { .. })),
        matches!(bad(header.to_string(), 3), Err(Error::CorruptFile { .. })),
        matches!(bad(header.replace("MET_UCHAR", "MET_LONG"), 16), Err(Error::UnsupportedFormat { .. })),
    ];
    let rejected = named.iter().filter(|&&b| b).count();
    check(
        json_ok && csv_ok && from_str_ok && rejected == named.len(),
        format!(
            "{checked} MetaImage variants, report JSON {}, CSV {}, {rejected}/{} corrupt headers rejected by name",
            if json_ok && from_str_ok { "ok" } else { "FAILED" },
            if csv_ok { "ok" } else { "FAILED" },
            named.len()
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("metric oracle equivalence", metric_oracle),
        ("DSC formula fidelity", dsc_fidelity),
        ("gradient correctness", gradient_correctness),
        ("transform exactness", transform_exactness),
        ("registration recovery", registration_recovery),
        ("tracking beats static baseline", direction_reproduction),
        ("real-time trade-off", realtime_tradeoff),
        ("determinism", determinism),
        ("I/O round trips", io_round_trips),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("criterion {} PASS  {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {} FAIL  {name}: {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
