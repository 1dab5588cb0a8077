//! Command-line front end: `synth`, `track`, `eval` and `bench`.
//!
//! Exit codes: 0 success, 2 input or configuration error, 3 tracking
//! completed but the time budget was exceeded, 4 internal failure.
//! Every command prints its fully resolved configuration first.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{aggregate_cohort, evaluate_masks, evaluate_sequence, CohortReport, MetricsReport};
use crate::registration::{Profile, RegistrationConfig};
use crate::similarity::MetricKind;
use crate::synth::{self, Deformation, PhantomSpec};
use crate::tracker::{latency_summary, track_with_mode, Mode, Strategy};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_INTERNAL: i32 = 4;

/// Environment variable naming the default output root.
pub const OUT_ENV: &str = "CINETRACK_OUT";

#[derive(Debug, Parser)]
#[command(name = "cinetrack", version, about = "Registration-based tumour tracking in cine-MRI")]
pub struct Cli {
    /// Seed for every random choice (phantom, sampling).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// Zero all timings in written files so repeated runs are byte-identical.
    #[arg(long, global = true)]
    pub deterministic: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic case with ground truth.
    Synth(SynthArgs),
    /// Propagate the first mask through a case.
    Track(TrackArgs),
    /// Score tracking results against reference masks.
    Eval(EvalArgs),
    /// Compare strategies and profiles on one case.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Case directory to write (default: $CINETRACK_OUT/<case-id>).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value_t = 40)]
    pub frames: usize,
    /// Frame width and height in pixels.
    #[arg(long, default_value_t = 256)]
    pub size: usize,
    #[arg(long, default_value_t = 1.0)]
    pub spacing: f64,
    /// Peak tumour displacement in mm.
    #[arg(long, default_value_t = 8.0)]
    pub amplitude: f64,
    /// Motion period in frames.
    #[arg(long, default_value_t = 16.0)]
    pub period: f64,
    /// Noise standard deviation as a fraction of the tumour contrast.
    #[arg(long, default_value_t = 0.02)]
    pub noise: f64,
    #[arg(long, default_value_t = 4.0)]
    pub frame_rate: f64,
    /// Peak amplitude of an additional smooth deformation, in mm.
    #[arg(long)]
    pub deform: Option<f64>,
    #[arg(long, default_value = "synth")]
    pub case_id: String,
}

#[derive(Debug, Args, Clone)]
pub struct RegistrationArgs {
    #[arg(long, default_value = "quality")]
    pub profile: String,
    #[arg(long, default_value = "msd")]
    pub metric: String,
    /// Finest-level control-point spacing in mm (profile default otherwise).
    #[arg(long)]
    pub control_spacing: Option<f64>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Case directory.
    pub case: PathBuf,
    /// Result directory (default: $CINETRACK_OUT/<case-id>-<strategy>).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long, default_value = "register-to-first")]
    pub strategy: String,
    #[command(flatten)]
    pub registration: RegistrationArgs,
    /// Wall-clock budget per sequence in ms.
    #[arg(long, default_value_t = 1000.0)]
    pub budget_ms: f64,
    /// Disable budget accounting.
    #[arg(long)]
    pub no_budget: bool,
    /// Register frames concurrently (register-to-first only); timings are
    /// then not representative of streaming latency.
    #[arg(long)]
    pub offline: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Result directory, or a directory of result directories.
    pub pred: PathBuf,
    /// Case directory with reference masks, or a directory of cases.
    pub gt: PathBuf,
    /// Report directory (default: $CINETRACK_OUT/eval).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub budget_ms: Option<f64>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    pub case: PathBuf,
    /// Report directory (default: $CINETRACK_OUT/bench-<case-id>).
    #[arg(short, long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "static,register-to-first")]
    pub strategies: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "quality,realtime")]
    pub profiles: Vec<String>,
    #[arg(long, default_value = "msd")]
    pub metric: String,
    #[arg(long, default_value_t = 1000.0)]
    pub budget_ms: f64,
}

/// Failure carrying its exit code.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub error: Error,
}

impl From<Error> for CliError {
    fn from(error: Error) -> Self {
        let code = match error {
            Error::Config(_)
            | Error::Input(_)
            | Error::Domain(_)
            | Error::UnsupportedFormat { .. }
            | Error::CorruptFile { .. }
            | Error::MissingHeaderKey { .. }
            | Error::UnknownHeaderKey { .. }
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Csv(_) => EXIT_INPUT,
            Error::DegenerateMetric(_) | Error::NonFinite(_) | Error::UndefinedMetric(_) => EXIT_INTERNAL,
        };
        CliError { code, error }
    }
}

type CliResult = std::result::Result<i32, CliError>;

fn default_out(explicit: &Option<PathBuf>, name: &str) -> PathBuf {
    explicit.clone().unwrap_or_else(|| {
        std::env::var_os(OUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("cinetrack-out"))
            .join(name)
    })
}

fn print_config<T: Serialize>(command: &str, cfg: &T) -> Result<()> {
    println!("{command} config: {}", serde_json::to_string(cfg)?);
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => run(cli),
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_INPUT
            } else {
                EXIT_OK
            }
        }
    }
}

pub fn run(cli: Cli) -> i32 {
    let out = match &cli.command {
        Command::Synth(a) => cmd_synth(&cli, a),
        Command::Track(a) => cmd_track(&cli, a),
        Command::Eval(a) => cmd_eval(&cli, a),
        Command::Bench(a) => cmd_bench(&cli, a),
    };
    match out {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {}", e.error);
            e.code
        }
    }
}

fn cmd_synth(cli: &Cli, a: &SynthArgs) -> CliResult {
    let mut spec = PhantomSpec {
        image_size: (a.size, a.size),
        spacing_mm: a.spacing,
        n_frames: a.frames,
        frame_rate_hz: a.frame_rate,
        seed: cli.seed,
        case_id: a.case_id.clone(),
        ..PhantomSpec::default()
    };
    spec.noise_sigma = a.noise * spec.tumor.contrast;
    spec.motion.amplitude_mm = a.amplitude;
    spec.motion.period_frames = a.period;
    spec.motion.deformation = a.deform.map(|amp| Deformation {
        seed: cli.seed,
        amplitude_mm: amp,
        scale_mm: 30.0,
        bumps: 3,
    });
    let dir = default_out(&a.out, &a.case_id);
    print_config("synth", &serde_json::json!({ "out": dir, "spec": spec }))?;
    // Validation and generation finish before anything touches the disk.
    let case = synth::generate(&spec)?;
    io::write_case(&dir, &case.sequence, Some(&case.gt_masks))?;
    println!(
        "wrote case `{}`: {} frames of {}x{} at {} mm, peak motion {} mm -> {}",
        spec.case_id,
        spec.n_frames,
        a.size,
        a.size,
        spec.spacing_mm,
        spec.motion.amplitude_mm,
        dir.display()
    );
    Ok(EXIT_OK)
}

fn registration_config(cli: &Cli, r: &RegistrationArgs) -> Result<RegistrationConfig> {
    let profile: Profile = r.profile.parse()?;
    let mut cfg = RegistrationConfig::for_profile(profile);
    cfg.seed = cli.seed;
    cfg.metric = r.metric.parse::<MetricKind>()?;
    if let Some(v) = r.control_spacing {
        cfg.control_spacing_mm = v;
    }
    if let Some(v) = r.levels {
        cfg.levels = v;
    }
    if let Some(v) = r.iterations {
        cfg.iterations_per_level = v;
    }
    if let Some(v) = r.samples {
        cfg.samples_per_iteration = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_track(cli: &Cli, a: &TrackArgs) -> CliResult {
    let strategy: Strategy = a.strategy.parse()?;
    let cfg = registration_config(cli, &a.registration)?;
    let budget = (!a.no_budget).then_some(a.budget_ms);
    let mode = if a.offline { Mode::Offline } else { Mode::Streaming };
    let case = io::read_case(&a.case)?;
    let dir = default_out(&a.out, &format!("{}-{}", case.meta.case_id, strategy.as_str()));
    print_config(
        "track",
        &serde_json::json!({
            "case": a.case, "out": dir, "strategy": strategy, "mode": mode,
            "budget_ms": budget, "deterministic": cli.deterministic, "registration": cfg,
        }),
    )?;

    let mut result = track_with_mode(&case.sequence, strategy, &cfg, budget, mode)?;
    let latency = result.summary().latency;
    let over_budget = !result.budget_violations.is_empty() || latency.within_budget == Some(false);
    if cli.deterministic {
        result.redact_timings();
    }
    io::write_tracking_result(&dir, &result)?;

    println!(
        "tracked {} frames with {} ({} failures) -> {}",
        result.masks.len(),
        strategy.as_str(),
        result.failures.len(),
        dir.display()
    );
    if !cli.deterministic {
        println!(
            "latency: total {:.1} ms, mean {:.2} ms/frame, p95 {:.2} ms, {} frames over budget",
            latency.total_ms,
            latency.mean_ms,
            latency.p95_ms,
            result.budget_violations.len()
        );
    }
    if over_budget {
        eprintln!("warning: real-time budget of {} ms exceeded", a.budget_ms);
        return Ok(EXIT_BUDGET);
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Serialize, serde::Deserialize, PartialEq)]
pub struct EvalReport {
    pub schema_version: u32,
    pub cases: Vec<MetricsReport>,
    pub cohort: CohortReport,
}

fn cmd_eval(cli: &Cli, a: &EvalArgs) -> CliResult {
    let dir = default_out(&a.out, "eval");
    print_config(
        "eval",
        &serde_json::json!({
            "pred": a.pred, "gt": a.gt, "out": dir, "budget_ms": a.budget_ms,
            "deterministic": cli.deterministic,
        }),
    )?;
    let preds = io::list_cases(&a.pred)?;
    let gts = io::list_cases(&a.gt)?;
    let mut gt_by_id = std::collections::BTreeMap::new();
    for g in &gts {
        let case = io::read_case(g)?;
        gt_by_id.insert(case.meta.case_id.clone(), case);
    }
    let mut reports = Vec::new();
    for p in &preds {
        let (masks, summary) = io::read_tracking_result(p)?;
        let gt = gt_by_id.get(&summary.case_id).ok_or_else(|| {
            Error::Input(format!("no reference case `{}` under {}", summary.case_id, a.gt.display()))
        })?;
        let gt_masks = gt.gt_masks.as_ref().ok_or_else(|| {
            Error::Input(format!("case `{}` has no reference masks", summary.case_id))
        })?;
        let mut r = evaluate_masks(&summary.case_id, &masks, gt_masks, Some(&summary.per_frame_ms))?;
        r.strategy = Some(summary.strategy.as_str().to_string());
        let mut lat = latency_summary(&summary.per_frame_ms, summary.total_ms, a.budget_ms.or(summary.budget_ms), summary.timings_redacted);
        if cli.deterministic {
            r.frames.iter_mut().for_each(|f| f.ms = 0.0);
            lat = latency_summary(&vec![0.0; summary.frames], 0.0, lat.budget_ms, true);
        }
        r.latency = Some(lat);
        reports.push(r);
    }
    if reports.is_empty() {
        return Err(Error::Input(format!("no tracking results under {}", a.pred.display())).into());
    }
    let report = EvalReport {
        schema_version: crate::metrics::SCHEMA_VERSION,
        cohort: aggregate_cohort(&reports),
        cases: reports,
    };
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    io::write_json(&report, dir.join("report.json"))?;
    io::write_reports_csv(&report.cases, dir.join("frames.csv"))?;
    for r in &report.cases {
        println!(
            "{}: DSC {} HD {} ASD {} CD {} ({} frames, {} excluded)",
            r.case_id,
            fmt_opt(r.aggregate.dsc.map(|s| s.mean), 4),
            fmt_opt(r.aggregate.hd.map(|s| s.mean), 3),
            fmt_opt(r.aggregate.asd.map(|s| s.mean), 3),
            fmt_opt(r.aggregate.cd.map(|s| s.mean), 3),
            r.aggregate.frames,
            r.aggregate.excluded
        );
    }
    let m = &report.cohort.mean;
    println!(
        "aggregate over {} case(s): DSC {} HD {} ASD {} CD {}",
        report.cases.len(),
        fmt_opt(m.dsc, 4),
        fmt_opt(m.hd, 3),
        fmt_opt(m.asd, 3),
        fmt_opt(m.cd, 3)
    );
    Ok(EXIT_OK)
}

fn fmt_opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

/// One row of the comparison table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BenchRow {
    pub method: String,
    pub dsc: Option<f64>,
    pub hd_mm: Option<f64>,
    pub asd_mm: Option<f64>,
    pub cd_mm: Option<f64>,
    pub total_ms: f64,
    pub p95_frame_ms: f64,
    pub within_budget: Option<bool>,
}

pub const BENCH_COLUMNS: [&str; 8] =
    ["method", "dsc", "hd_mm", "asd_mm", "cd_mm", "total_ms", "p95_frame_ms", "within_budget"];

fn bench_plan(a: &BenchArgs) -> Result<Vec<(Strategy, Option<Profile>)>> {
    let mut plan = Vec::new();
    for s in &a.strategies {
        let strategy: Strategy = s.parse()?;
        if strategy == Strategy::Static {
            plan.push((strategy, None));
            continue;
        }
        for p in &a.profiles {
            plan.push((strategy, Some(p.parse::<Profile>()?)));
        }
    }
    if plan.is_empty() {
        return Err(Error::Config("nothing to benchmark".into()));
    }
    Ok(plan)
}

/// Aligned text rendering of bench rows.
pub fn render_table(rows: &[BenchRow]) -> String {
    let cells: Vec<[String; 8]> = rows
        .iter()
        .map(|r| {
            [
                r.method.clone(),
                fmt_opt(r.dsc, 4),
                fmt_opt(r.hd_mm, 3),
                fmt_opt(r.asd_mm, 3),
                fmt_opt(r.cd_mm, 3),
                format!("{:.1}", r.total_ms),
                format!("{:.2}", r.p95_frame_ms),
                r.within_budget.map_or("n/a".into(), |b| if b { "yes" } else { "no" }.into()),
            ]
        })
        .collect();
    let mut widths = BENCH_COLUMNS.map(str::len);
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let line = |out: &mut String, row: &[String]| {
        let parts: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(i, (c, w))| if i == 0 { format!("{c:<w$}") } else { format!("{c:>w$}") })
            .collect();
        let _ = writeln!(out, "{}", parts.join("  ").trim_end());
    };
    line(&mut out, &BENCH_COLUMNS.map(String::from));
    for row in &cells {
        line(&mut out, row);
    }
    out
}

fn write_bench_csv(rows: &[BenchRow], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(BENCH_COLUMNS)?;
    let opt = |v: Option<f64>| v.map_or_else(String::new, |x| x.to_string());
    for r in rows {
        w.write_record([
            r.method.clone(),
            opt(r.dsc),
            opt(r.hd_mm),
            opt(r.asd_mm),
            opt(r.cd_mm),
            r.total_ms.to_string(),
            r.p95_frame_ms.to_string(),
            r.within_budget.map_or_else(String::new, |b| b.to_string()),
        ])?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn cmd_bench(cli: &Cli, a: &BenchArgs) -> CliResult {
    let plan = bench_plan(a)?;
    let metric: MetricKind = a.metric.parse()?;
    let case = io::read_case(&a.case)?;
    let gt = case
        .gt_masks
        .as_ref()
        .ok_or_else(|| Error::Input(format!("{} has no reference masks", a.case.display())))?;
    let dir = default_out(&a.out, &format!("bench-{}", case.meta.case_id));
    let configs: Vec<(String, Strategy, RegistrationConfig)> = plan
        .iter()
        .map(|&(s, p)| {
            let profile = p.unwrap_or(Profile::Quality);
            let cfg = RegistrationConfig {
                seed: cli.seed,
                metric,
                ..RegistrationConfig::for_profile(profile)
            };
            let name = match p {
                None => s.as_str().to_string(),
                Some(p) => format!("{}/{}", s.as_str(), p.as_str()),
            };
            (name, s, cfg)
        })
        .collect();
    print_config(
        "bench",
        &serde_json::json!({
            "case": a.case, "out": dir, "budget_ms": a.budget_ms, "deterministic": cli.deterministic,
            "runs": configs.iter().map(|(n, _, c)| serde_json::json!({"method": n, "registration": c})).collect::<Vec<_>>(),
        }),
    )?;

    let mut rows = Vec::new();
    for (name, strategy, cfg) in &configs {
        let result = track_with_mode(&case.sequence, *strategy, cfg, Some(a.budget_ms), Mode::Streaming)?;
        let report = evaluate_sequence(&result, gt, Some(a.budget_ms))?;
        let lat = report.latency.clone().expect("evaluate_sequence sets latency");
        let mean = |s: Option<crate::metrics::Stat>| s.map(|s| s.mean);
        let (total_ms, p95, within) = if cli.deterministic {
            (0.0, 0.0, None)
        } else {
            (lat.total_ms, lat.p95_ms, lat.within_budget)
        };
        rows.push(BenchRow {
            method: name.clone(),
            dsc: mean(report.aggregate.dsc),
            hd_mm: mean(report.aggregate.hd),
            asd_mm: mean(report.aggregate.asd),
            cd_mm: mean(report.aggregate.cd),
            total_ms,
            p95_frame_ms: p95,
            within_budget: within,
        });
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write_bench_csv(&rows, &dir.join("bench.csv"))?;
    let table = render_table(&rows);
    std::fs::write(dir.join("bench.txt"), &table).map_err(|e| Error::io(dir.join("bench.txt"), e))?;
    print!("{table}");
    Ok(EXIT_OK)
}
