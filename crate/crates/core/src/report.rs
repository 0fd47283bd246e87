//! Decisions and their JSON-serialisable reports.

use serde::{Deserialize, Serialize};

use crate::bootstrap::BootstrapDraws;
use crate::error::Result;
use crate::fda::{Grid, GridPair};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TestKind {
    TwoSampleClassical,
    TwoSampleRelevant,
    ChangePointClassical,
    ChangePointRelevant,
}

impl TestKind {
    pub fn is_relevant(self) -> bool {
        matches!(self, TestKind::TwoSampleRelevant | TestKind::ChangePointRelevant)
    }

    pub fn is_change_point(self) -> bool {
        matches!(
            self,
            TestKind::ChangePointClassical | TestKind::ChangePointRelevant
        )
    }
}

/// A grid location with its coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub i: usize,
    pub k: usize,
    pub s: f64,
    pub t: f64,
}

impl Location {
    pub fn new(grid: &Grid, (i, k): GridPair) -> Self {
        Self {
            i,
            k,
            s: grid.points()[i],
            t: grid.points()[k],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChangePointDetails {
    /// Clamped change-location estimate.
    pub shat: f64,
    /// Knot maximising `max_{t,u} |U_k(t,u)|` over `1 ≤ k < n`.
    pub k_argmax: usize,
    /// `⌊ŝ n⌋`: number of observations attributed to the first segment.
    pub split: usize,
    /// Set when `⌊ŝ n⌋ > n − l`, where the bootstrap field is frozen.
    pub shat_in_frozen_tail: bool,
}

/// Outcome of one hypothesis test.
///
/// `reject` holds exactly when `statistic > delta + quantile / sqrt_size`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub test: TestKind,
    pub statistic: f64,
    pub quantile: f64,
    pub critical_value: f64,
    pub reject: bool,
    pub alpha: f64,
    pub delta: f64,
    pub replicates: usize,
    pub block_lengths: Vec<usize>,
    pub seed: u64,
    pub sample_sizes: Vec<usize>,
    /// `√(m+n)` for two-sample tests, `√n` for change-point tests.
    pub sqrt_size: f64,
    pub argmax: Location,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub extremal_plus: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub extremal_minus: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub change_point: Option<ChangePointDetails>,
    #[serde(default)]
    pub warnings: Vec<String>,
}

impl TestReport {
    pub fn decision_label(&self) -> &'static str {
        if self.reject {
            "REJECT"
        } else {
            "FAIL-TO-REJECT"
        }
    }
}

/// A test statistic together with its bootstrap sample; decides at any `α`.
#[derive(Debug, Clone)]
pub struct BootstrapTest {
    pub kind: TestKind,
    pub statistic: f64,
    pub delta: f64,
    pub sqrt_size: f64,
    pub draws: BootstrapDraws,
    pub(crate) meta: ReportMeta,
}

#[derive(Debug, Clone)]
pub(crate) struct ReportMeta {
    pub block_lengths: Vec<usize>,
    pub seed: u64,
    pub sample_sizes: Vec<usize>,
    pub argmax: Location,
    pub extremal: Option<(usize, usize)>,
    pub change_point: Option<ChangePointDetails>,
    pub warnings: Vec<String>,
}

impl BootstrapTest {
    pub fn critical_value(&self, alpha: f64) -> Result<f64> {
        Ok(self.delta + self.draws.quantile(alpha)? / self.sqrt_size)
    }

    pub fn reject(&self, alpha: f64) -> Result<bool> {
        Ok(self.statistic > self.critical_value(alpha)?)
    }

    pub fn report(&self, alpha: f64) -> Result<TestReport> {
        let quantile = self.draws.quantile(alpha)?;
        let critical_value = self.delta + quantile / self.sqrt_size;
        Ok(TestReport {
            test: self.kind,
            statistic: self.statistic,
            quantile,
            critical_value,
            reject: self.statistic > critical_value,
            alpha,
            delta: self.delta,
            replicates: self.draws.len(),
            block_lengths: self.meta.block_lengths.clone(),
            seed: self.meta.seed,
            sample_sizes: self.meta.sample_sizes.clone(),
            sqrt_size: self.sqrt_size,
            argmax: self.meta.argmax,
            extremal_plus: self.meta.extremal.map(|e| e.0),
            extremal_minus: self.meta.extremal.map(|e| e.1),
            change_point: self.meta.change_point.clone(),
            warnings: self.meta.warnings.clone(),
        })
    }
}
