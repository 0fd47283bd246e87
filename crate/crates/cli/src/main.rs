//! `covop`: bootstrap tests for covariance operators of functional data.

mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use covop_core::bootstrap::with_workers;
use covop_core::change_point::{change_point_test, ChangePointConfig};
use covop_core::experiments::{self, ExperimentPlan};
use covop_core::simulate::{CoeffDist, Family, Far1Setting, ScenarioSpec};
use covop_core::two_sample::{two_sample_test, TwoSampleConfig};
use covop_core::{read_curves, write_curves, TestReport};
use serde_json::{json, Value};

use manifest::Manifest;

#[derive(Parser, Debug)]
#[command(name = "covop", version, about, long_about = None)]
struct Cli {
    /// Worker threads for bootstrap replicates and Monte Carlo runs.
    /// Results are identical for every worker count.
    #[arg(long, global = true, env = "COVOP_WORKERS")]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Draw curves from a simulation design and write them as CSV.
    Simulate(SimulateArgs),
    /// Compare the covariance operators of two samples.
    TwoSample(TwoSampleArgs),
    /// Test a series for a change in its covariance operator.
    ChangePoint(ChangePointArgs),
    /// Run a Monte Carlo plan and write rejection-frequency tables.
    Experiment(ExperimentArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum FamilyArg {
    /// Sine/cosine expansion with t5 coefficients (two samples).
    SincosT5,
    /// Independent Gaussian spline curves.
    Fiid,
    /// Independent spline curves with scaled t5 coefficients.
    NongaussT5,
    /// Functional moving average of spline innovations.
    Fma,
    /// Functional AR(1) in a 55-function Fourier basis.
    Far1,
    /// Brownian motions with a multiplicative change.
    BrownianCp,
}

impl From<FamilyArg> for Family {
    fn from(f: FamilyArg) -> Self {
        match f {
            FamilyArg::SincosT5 => Family::SincosT5,
            FamilyArg::Fiid => Family::Fiid,
            FamilyArg::NongaussT5 => Family::NongaussT5,
            FamilyArg::Fma => Family::Fma,
            FamilyArg::Far1 => Family::Far1,
            FamilyArg::BrownianCp => Family::BrownianCp,
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum SettingArg {
    S1,
    S2,
    S3,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Number of curves (the second sample for sincos-t5).
    #[arg(long, default_value_t = 100)]
    count: usize,
    /// Size of the first sample for sincos-t5.
    #[arg(long, default_value_t = 100)]
    count_x: usize,
    /// Equidistant grid points on [0, 1].
    #[arg(long, default_value_t = 101)]
    grid: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// fMA coefficient of lag 1: X_i = e_i + kappa1 e_{i-1} + kappa2 e_{i-2}.
    #[arg(long, default_value_t = 0.0)]
    kappa1: f64,
    /// fMA coefficient of lag 2.
    #[arg(long, default_value_t = 0.0)]
    kappa2: f64,
    /// Use scaled t5 spline coefficients for fma instead of Gaussian ones.
    #[arg(long)]
    t5_coefficients: bool,
    /// Factor applied to curves after floor(s_star * count) (spline families).
    #[arg(long, default_value_t = 1.0)]
    a: f64,
    /// Relative change location for --a.
    #[arg(long, default_value_t = 0.5)]
    s_star: f64,
    /// Factor of the second sample for sincos-t5.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// fAR(1) innovation setting.
    #[arg(long, value_enum, default_value = "s1")]
    setting: SettingArg,
    /// fAR(1): coefficients perturbed after the midpoint (0, 2, 6 or 25).
    #[arg(long, default_value_t = 0)]
    m_changed: usize,
    /// Brownian change: post-change factor 1 + d1 + d2 (1 + sin 2 pi t).
    #[arg(long, default_value_t = 0.0)]
    d1: f64,
    #[arg(long, default_value_t = 0.0)]
    d2: f64,
    /// Brownian change: first changed curve (1-based); default floor(s_star * count) + 1.
    #[arg(long)]
    k_star: Option<usize>,
    /// Output CSV (first sample for sincos-t5).
    #[arg(long)]
    out: PathBuf,
    /// Second-sample CSV, required for sincos-t5.
    #[arg(long)]
    out_y: Option<PathBuf>,
}

fn probability(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("must lie in (0, 1), got {v}"))
    }
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("must be finite and non-negative, got {v}"))
    }
}

fn positive_count(s: &str) -> Result<usize, String> {
    let v: usize = s.parse().map_err(|e| format!("{e}"))?;
    if v >= 1 {
        Ok(v)
    } else {
        Err("must be at least 1".into())
    }
}

#[derive(Args, Debug)]
struct TwoSampleArgs {
    /// First sample (CSV: grid header, one curve per row).
    #[arg(long)]
    x: PathBuf,
    /// Second sample on the same grid.
    #[arg(long)]
    y: PathBuf,
    /// Level; the critical value uses the floor(R (1 - alpha))-th smallest draw.
    #[arg(long, default_value_t = 0.05, value_parser = probability)]
    alpha: f64,
    /// Threshold. 0 tests C1 = C2 by rejecting when max|C1 - C2| > q / sqrt(m + n),
    /// q from draws max|B|; > 0 tests max|C1 - C2| <= delta by rejecting when
    /// max|C1 - C2| > delta + q / sqrt(m + n), q from draws of B on the
    /// estimated extremal sets.
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    delta: f64,
    /// Block length of the first sample in the multiplier block bootstrap.
    #[arg(long, default_value_t = 1, value_parser = positive_count)]
    l1: usize,
    /// Block length of the second sample.
    #[arg(long, default_value_t = 1, value_parser = positive_count)]
    l2: usize,
    /// Bootstrap replicates R.
    #[arg(long, default_value_t = 200, value_parser = positive_count)]
    replicates: usize,
    /// Extremal sets keep points within c ln(m + n) / sqrt(m + n) of the maximum.
    #[arg(long, default_value_t = 0.1)]
    extremal_const: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ChangePointArgs {
    /// Series (CSV: grid header, one curve per row, in time order).
    #[arg(long)]
    data: PathBuf,
    /// Level; the critical value uses the floor(R (1 - alpha))-th smallest draw.
    #[arg(long, default_value_t = 0.05, value_parser = probability)]
    alpha: f64,
    /// Threshold. 0 tests for any change by rejecting when the maximal CUSUM
    /// max_k |U_k| exceeds q / sqrt(n); > 0 tests max|C1 - C2| <= delta with
    /// the estimate max_k |U_k| / (s (1 - s)).
    #[arg(long, default_value_t = 0.0, value_parser = non_negative)]
    delta: f64,
    /// Block length of the multiplier block bootstrap.
    #[arg(long, default_value_t = 1, value_parser = positive_count)]
    block_len: usize,
    /// The change location estimate is clamped to [vartheta, 1 - vartheta].
    #[arg(long, default_value_t = 0.1)]
    vartheta: f64,
    /// Bootstrap replicates R.
    #[arg(long, default_value_t = 200, value_parser = positive_count)]
    replicates: usize,
    /// Extremal sets keep points within c ln(n) / sqrt(n) of the maximum.
    #[arg(long, default_value_t = 0.1)]
    extremal_const: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    /// Plan file (JSON).
    #[arg(long)]
    plan: PathBuf,
    /// Monte Carlo runs per sweep point; overrides the plan.
    #[arg(long, value_parser = positive_count)]
    runs: Option<usize>,
    /// Base seed; overrides the plan.
    #[arg(long)]
    seed: Option<u64>,
    /// Also write power_curve.csv of frequency against the scale factor a.
    #[arg(long)]
    power_curve: bool,
    /// Output directory for results.json and results.csv.
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn run(cli: Cli) -> AnyResult<()> {
    let workers = cli.workers;
    let start = Instant::now();
    match cli.command {
        Command::Simulate(args) => simulate(args),
        Command::TwoSample(args) => {
            let x = read_curves(&args.x)?;
            let y = read_curves(&args.y)?;
            let config = TwoSampleConfig {
                alpha: args.alpha,
                delta: args.delta,
                block_len_1: args.l1,
                block_len_2: args.l2,
                replicates: args.replicates,
                extremal_const: args.extremal_const,
                seed: args.seed,
            };
            let report = with_workers(workers, || two_sample_test(&x, &y, &config))??;
            let manifest = Manifest::new("two-sample", &config, &[&args.x, &args.y], start)?;
            finish(report, manifest, args.out.as_deref())
        }
        Command::ChangePoint(args) => {
            let data = read_curves(&args.data)?;
            let config = ChangePointConfig {
                alpha: args.alpha,
                delta: args.delta,
                block_len: args.block_len,
                replicates: args.replicates,
                extremal_const: args.extremal_const,
                vartheta: args.vartheta,
                seed: args.seed,
            };
            let report = with_workers(workers, || change_point_test(&data, &config))??;
            let manifest = Manifest::new("change-point", &config, &[&args.data], start)?;
            finish(report, manifest, args.out.as_deref())
        }
        Command::Experiment(args) => experiment(args, workers, start),
    }
}

fn finish(report: TestReport, manifest: Manifest, out: Option<&Path>) -> AnyResult<()> {
    println!("{}", report.decision_label());
    println!("statistic = {}", report.statistic);
    println!("critical value = {}", report.critical_value);
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    if let Some(path) = out {
        let doc = json!({
            "schema": 1,
            "decision": report.decision_label(),
            "report": report,
            "manifest": manifest,
        });
        write_json(path, &doc)?;
    }
    Ok(())
}

fn write_json(path: &Path, doc: &Value) -> AnyResult<()> {
    let mut text = serde_json::to_string_pretty(doc)?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    Ok(())
}

fn simulate(args: SimulateArgs) -> AnyResult<()> {
    let family = Family::from(args.family);
    let spec = ScenarioSpec {
        family,
        m: args.count_x,
        n: args.count,
        grid: args.grid,
        c: args.c,
        a: args.a,
        kappa1: args.kappa1,
        kappa2: args.kappa2,
        coeff_dist: args.t5_coefficients.then_some(CoeffDist::T5Scaled),
        setting: match args.setting {
            SettingArg::S1 => Far1Setting::S1,
            SettingArg::S2 => Far1Setting::S2,
            SettingArg::S3 => Far1Setting::S3,
        },
        m_changed: args.m_changed,
        d1: args.d1,
        d2: args.d2,
        k_star: args.k_star,
        s_star: args.s_star,
    };
    if family == Family::SincosT5 {
        let out_y = args
            .out_y
            .ok_or("sincos-t5 draws two samples; pass --out-y for the second")?;
        let (x, y) = spec.two_samples(args.seed)?;
        write_curves(&x, &args.out)?;
        write_curves(&y, &out_y)?;
        println!(
            "wrote {} and {} curves on {} grid points",
            x.len(),
            y.len(),
            x.grid_len()
        );
    } else {
        let s = spec.series(args.seed)?;
        write_curves(&s, &args.out)?;
        println!("wrote {} curves on {} grid points", s.len(), s.grid_len());
    }
    Ok(())
}

fn experiment(args: ExperimentArgs, workers: Option<usize>, start: Instant) -> AnyResult<()> {
    let text = std::fs::read_to_string(&args.plan)
        .map_err(|e| format!("cannot read {}: {e}", args.plan.display()))?;
    let mut plan = ExperimentPlan::from_json(&text)
        .map_err(|e| format!("{}: {e}", args.plan.display()))?;
    if let Some(runs) = args.runs {
        plan.runs = runs;
    }
    if let Some(seed) = args.seed {
        plan.base_seed = seed;
    }
    let result = with_workers(workers, || experiments::run_experiment(&plan))??;

    std::fs::create_dir_all(&args.out)
        .map_err(|e| format!("cannot create {}: {e}", args.out.display()))?;
    std::fs::write(args.out.join("results.csv"), result.to_csv())?;

    let mut curve = None;
    if args.power_curve {
        let points = result
            .points
            .iter()
            .map(|p| {
                let f = p.cells.first().map(|c| c.frequency).ok_or_else(|| {
                    format!("sweep point {} failed: {}", p.label, p.failure.clone().unwrap_or_default())
                })?;
                Ok((p.scenario.a, f))
            })
            .collect::<Result<Vec<_>, String>>()?;
        std::fs::write(args.out.join("power_curve.csv"), experiments::power_curve_csv(&points))?;
        curve = Some(points);
    }

    // per-point runtimes move into the manifest's timing block so the rest
    // of the document is reproducible byte for byte
    let mut doc = serde_json::to_value(&result)?;
    let mut runtimes = serde_json::Map::new();
    if let Some(points) = doc.get_mut("points").and_then(Value::as_array_mut) {
        for p in points {
            let obj = p.as_object_mut().expect("points serialise to objects");
            let secs = obj.remove("runtime_secs").unwrap_or(Value::Null);
            let label = obj.get("label").and_then(Value::as_str).unwrap_or("").to_string();
            runtimes.insert(label, secs);
        }
    }
    let mut manifest = Manifest::new("experiment", &plan, &[&args.plan], start)?;
    manifest.timing.point_runtimes_secs = Some(runtimes);
    let doc = json!({
        "schema": 1,
        "result": doc,
        "power_curve": curve,
        "manifest": manifest,
    });
    write_json(&args.out.join("results.json"), &doc)?;

    let failed = result.points.iter().filter(|p| p.failure.is_some()).count();
    println!(
        "{} sweep points, {} runs each, {} failed; tables in {}",
        result.points.len(),
        plan.runs,
        failed,
        args.out.display()
    );
    for p in &result.points {
        if let Some(f) = &p.failure {
            eprintln!("warning: sweep point {}: {f}", p.label);
        }
    }
    Ok(())
}
