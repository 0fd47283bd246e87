//! Monte Carlo rejection-frequency tables.
//!
//! Seed protocol: run `j` of every sweep point uses
//! `run_seed = derive_seed(base_seed, j)`; data are generated from
//! `derive_seed(run_seed, 0)` and the bootstrap from
//! `derive_seed(run_seed, 1)`. Sweep points therefore share random numbers
//! run by run, and tallies do not depend on the worker count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::bootstrap::{check_alpha, derive_seed, with_workers};
use crate::change_point::{ChangePointAnalysis, ChangePointConfig};
use crate::error::{Error, Result};
use crate::report::{BootstrapTest, TestKind};
use crate::simulate::{ScenarioSpec, FAR1_BURN_IN};
use crate::two_sample::{TwoSampleAnalysis, TwoSampleConfig};

/// Test settings shared by every run of a plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestSpec {
    pub kind: TestKind,
    pub delta: f64,
    /// Block length of the first sample, or of the series.
    pub block_len: usize,
    /// Block length of the second sample; defaults to `block_len`.
    pub block_len_2: Option<usize>,
    pub replicates: usize,
    pub extremal_const: f64,
    pub vartheta: f64,
}

impl Default for TestSpec {
    fn default() -> Self {
        Self {
            kind: TestKind::TwoSampleClassical,
            delta: 0.0,
            block_len: 1,
            block_len_2: None,
            replicates: 200,
            extremal_const: 0.1,
            vartheta: 0.1,
        }
    }
}

impl TestSpec {
    fn validate(&self) -> Result<()> {
        if self.kind.is_relevant() != (self.delta > 0.0) {
            return Err(Error::Config(format!(
                "{:?} is incompatible with delta = {}",
                self.kind, self.delta
            )));
        }
        Ok(())
    }

    fn two_sample_config(&self, seed: u64) -> TwoSampleConfig {
        TwoSampleConfig {
            alpha: 0.05,
            delta: self.delta,
            block_len_1: self.block_len,
            block_len_2: self.block_len_2.unwrap_or(self.block_len),
            replicates: self.replicates,
            extremal_const: self.extremal_const,
            seed,
        }
    }

    fn change_point_config(&self, seed: u64) -> ChangePointConfig {
        ChangePointConfig {
            alpha: 0.05,
            delta: self.delta,
            block_len: self.block_len,
            replicates: self.replicates,
            extremal_const: self.extremal_const,
            vartheta: self.vartheta,
            seed,
        }
    }
}

/// Published rejection percentage for one level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceValue {
    pub alpha: f64,
    pub percent: f64,
}

/// One column of a table: overrides applied on top of the plan template.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepPoint {
    pub label: String,
    /// Fields merged into the scenario template.
    pub scenario: BTreeMap<String, Value>,
    /// Fields merged into the test template.
    pub test: BTreeMap<String, Value>,
    pub reference: Vec<ReferenceValue>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentPlan {
    pub name: String,
    pub scenario: ScenarioSpec,
    pub test: TestSpec,
    pub sweep: Vec<SweepPoint>,
    pub runs: usize,
    pub alphas: Vec<f64>,
    pub base_seed: u64,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Self {
            name: String::new(),
            scenario: ScenarioSpec::default(),
            test: TestSpec::default(),
            sweep: Vec::new(),
            runs: 500,
            alphas: vec![0.05],
            base_seed: 0,
        }
    }
}

fn merge<T: Serialize + serde::de::DeserializeOwned>(
    base: &T,
    overrides: &BTreeMap<String, Value>,
) -> Result<T> {
    let mut value = serde_json::to_value(base)?;
    let obj = value
        .as_object_mut()
        .expect("templates serialise to JSON objects");
    for (k, v) in overrides {
        obj.insert(k.clone(), v.clone());
    }
    Ok(serde_json::from_value(value)?)
}

impl ExperimentPlan {
    pub fn from_json(text: &str) -> Result<Self> {
        let plan: Self = serde_json::from_str(text)?;
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs < 1 {
            return Err(Error::Config("runs must be at least 1".into()));
        }
        if self.alphas.is_empty() {
            return Err(Error::Config("at least one alpha is required".into()));
        }
        for &a in &self.alphas {
            check_alpha(a)?;
        }
        for point in &self.sweep {
            merge(&self.scenario, &point.scenario)?;
            merge(&self.test, &point.test)?;
        }
        Ok(())
    }

    /// Scenario and test settings of one sweep point.
    pub fn resolve(&self, point: &SweepPoint) -> Result<(ScenarioSpec, TestSpec)> {
        let scenario = merge(&self.scenario, &point.scenario)?;
        let test = merge(&self.test, &point.test)?;
        scenario.validate()?;
        test.validate()?;
        Ok((scenario, test))
    }
}

/// Rejection frequency at one sweep point and level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub alpha: f64,
    pub rejections: usize,
    pub runs: usize,
    pub frequency: f64,
    /// `√(p̂(1 − p̂)/runs)`.
    pub std_error: f64,
    pub reference_percent: Option<f64>,
    /// `|p̂ − p_ref| / SE`; absent without a reference or when `SE = 0`.
    pub z_score: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointResult {
    pub label: String,
    pub scenario: ScenarioSpec,
    pub test: TestSpec,
    pub cells: Vec<CellResult>,
    /// First failing run and its error; such points carry no cells.
    pub failure: Option<String>,
    pub runtime_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub plan: ExperimentPlan,
    pub points: Vec<PointResult>,
    pub notes: Vec<String>,
}

fn run_once(scenario: &ScenarioSpec, test: &TestSpec, run_seed: u64) -> Result<BootstrapTest> {
    let data_seed = derive_seed(run_seed, 0);
    let boot_seed = derive_seed(run_seed, 1);
    if test.kind.is_change_point() {
        let sample = scenario.series(data_seed)?;
        let config = test.change_point_config(boot_seed);
        let analysis = ChangePointAnalysis::new(&sample, config.vartheta)?;
        match test.kind {
            TestKind::ChangePointClassical => analysis.classical(&config),
            _ => analysis.relevant(&config),
        }
    } else {
        let (x, y) = scenario.two_samples(data_seed)?;
        let config = test.two_sample_config(boot_seed);
        let analysis = TwoSampleAnalysis::new(&x, &y)?;
        match test.kind {
            TestKind::TwoSampleClassical => analysis.classical(&config),
            _ => analysis.relevant(&config),
        }
    }
}

fn run_point(plan: &ExperimentPlan, point: &SweepPoint) -> PointResult {
    let start = Instant::now();
    let mut result = PointResult {
        label: point.label.clone(),
        scenario: plan.scenario.clone(),
        test: plan.test.clone(),
        cells: Vec::new(),
        failure: None,
        runtime_secs: 0.0,
    };
    let outcome = plan.resolve(point).and_then(|(scenario, test)| {
        result.scenario = scenario.clone();
        result.test = test.clone();
        let decisions: Vec<Result<Vec<bool>>> = (0..plan.runs as u64)
            .into_par_iter()
            .map(|run| {
                let t = run_once(&scenario, &test, derive_seed(plan.base_seed, run))
                    .map_err(|e| Error::Config(format!("run {run}: {e}")))?;
                plan.alphas.iter().map(|&a| t.reject(a)).collect()
            })
            .collect();
        let mut counts = vec![0usize; plan.alphas.len()];
        for d in decisions {
            for (c, r) in counts.iter_mut().zip(d?) {
                *c += usize::from(r);
            }
        }
        Ok(counts)
    });
    match outcome {
        Ok(counts) => {
            result.cells = plan
                .alphas
                .iter()
                .zip(counts)
                .map(|(&alpha, rejections)| {
                    let reference = point
                        .reference
                        .iter()
                        .find(|r| (r.alpha - alpha).abs() < 1e-12)
                        .map(|r| r.percent);
                    cell(alpha, rejections, plan.runs, reference)
                })
                .collect();
        }
        Err(e) => result.failure = Some(e.to_string()),
    }
    result.runtime_secs = start.elapsed().as_secs_f64();
    result
}

fn cell(alpha: f64, rejections: usize, runs: usize, reference_percent: Option<f64>) -> CellResult {
    let frequency = rejections as f64 / runs as f64;
    let std_error = (frequency * (1.0 - frequency) / runs as f64).sqrt();
    let z_score = reference_percent
        .filter(|_| std_error > 0.0)
        .map(|p| (frequency - p / 100.0).abs() / std_error);
    CellResult {
        alpha,
        rejections,
        runs,
        frequency,
        std_error,
        reference_percent,
        z_score,
    }
}

fn notes(plan: &ExperimentPlan) -> Vec<String> {
    vec![
        format!(
            "curves are evaluated directly on {} equidistant grid points without basis smoothing",
            plan.scenario.grid
        ),
        "spline innovations use 21 cubic B-splines on equidistant knots".into(),
        format!("fAR(1) series discard a burn-in of {FAR1_BURN_IN} steps"),
        "runs share random numbers across sweep points".into(),
    ]
}

/// Runs every sweep point on the current rayon pool.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    plan.validate()?;
    let points = plan.sweep.iter().map(|p| run_point(plan, p)).collect();
    Ok(ExperimentResult {
        plan: plan.clone(),
        points,
        notes: notes(plan),
    })
}

/// [`run_experiment`] on a dedicated pool of `workers` threads.
pub fn run_experiment_with_workers(
    plan: &ExperimentPlan,
    workers: usize,
) -> Result<ExperimentResult> {
    with_workers(Some(workers), || run_experiment(plan))?
}

impl ExperimentResult {
    /// Table of all cells; contains no timings, so reruns are byte-identical.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "label,alpha,runs,rejections,frequency,std_error,reference_percent,z_score,failure\n",
        );
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        for p in &self.points {
            if let Some(f) = &p.failure {
                let _ = writeln!(out, "{},,,,,,,,{}", csv_field(&p.label), csv_field(f));
                continue;
            }
            for c in &p.cells {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},",
                    csv_field(&p.label),
                    c.alpha,
                    c.runs,
                    c.rejections,
                    c.frequency,
                    c.std_error,
                    opt(c.reference_percent),
                    opt(c.z_score),
                );
            }
        }
        out
    }

    /// Frequency of each point at `alpha`, in sweep order; failed points are skipped.
    pub fn frequencies(&self, alpha: f64) -> Vec<(String, f64)> {
        self.points
            .iter()
            .filter_map(|p| {
                p.cells
                    .iter()
                    .find(|c| (c.alpha - alpha).abs() < 1e-12)
                    .map(|c| (p.label.clone(), c.frequency))
            })
            .collect()
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Scale factors `√1.6, √1.7, …, √3.8`.
pub fn default_power_grid() -> Vec<f64> {
    (16..=38).map(|k| (k as f64 / 10.0).sqrt()).collect()
}

/// A plan whose sweep sets the scenario's `a` to each of `values`.
pub fn scale_sweep(template: &ExperimentPlan, values: &[f64]) -> ExperimentPlan {
    let mut plan = template.clone();
    plan.sweep = values
        .iter()
        .map(|&a| SweepPoint {
            label: format!("a={a}"),
            scenario: BTreeMap::from([("a".to_string(), Value::from(a))]),
            ..Default::default()
        })
        .collect();
    plan
}

/// `(a, frequency)` at the plan's first level, in sweep order.
pub fn power_curve(plan: &ExperimentPlan) -> Result<Vec<(f64, f64)>> {
    if plan.sweep.is_empty() {
        return Ok(Vec::new());
    }
    let result = run_experiment(plan)?;
    let alpha = plan.alphas[0];
    result
        .points
        .iter()
        .map(|p| {
            if let Some(f) = &p.failure {
                return Err(Error::Config(format!("sweep point {}: {f}", p.label)));
            }
            let c = p
                .cells
                .iter()
                .find(|c| c.alpha == alpha)
                .expect("every level has a cell");
            Ok((p.scenario.a, c.frequency))
        })
        .collect()
}

pub fn power_curve_csv(curve: &[(f64, f64)]) -> String {
    let mut out = String::from("a,a_squared,frequency\n");
    for (a, f) in curve {
        let _ = writeln!(out, "{a},{},{f}", a * a);
    }
    out
}
