//! Two-sample tests for covariance operators.
//!
//! The statistic is `d̂∞ = max |Ĉ₁ − Ĉ₂|` over the grid, with both covariance
//! estimates normalised by `1/(size − 1)`. Critical values come from the
//! multiplier block bootstrap field
//!
//! ```text
//! B̂(r) = √(m+n) { (1/m) Σ_k b₁(k) ξ_k − (1/n) Σ_k b₂(k) ζ_k }
//! ```
//!
//! where `b₁`, `b₂` are the centred block sums of the squared centred curves
//! (see [`block_sums`]). The classical test (`Δ = 0`) rejects when
//! `d̂∞ > q(T)/√(m+n)` with `T = max |B̂|`; the relevant test (`Δ > 0`)
//! rejects when `d̂∞ > Δ + q(K)/√(m+n)` with `K` the maximum of `±B̂` over the
//! estimated extremal sets.

use serde::{Deserialize, Serialize};

use crate::bootstrap::{
    block_sums, check_alpha, gaussian_multipliers, observation_weights, BootstrapDraws,
    MultiplierStream, StreamTag,
};
use crate::error::{invalid, Error, Result};
use crate::fda::{
    center_sample, empirical_covariance, CurveSample, Divisor, GridPair, PackedSym,
    Surface,
};
use crate::report::{BootstrapTest, Location, ReportMeta, TestKind, TestReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TwoSampleConfig {
    pub alpha: f64,
    /// Relevance threshold `Δ`; zero selects the classical test.
    pub delta: f64,
    pub block_len_1: usize,
    pub block_len_2: usize,
    pub replicates: usize,
    /// `c` in `c_{m,n} = c · ln(m+n)`.
    pub extremal_const: f64,
    pub seed: u64,
}

impl Default for TwoSampleConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            delta: 0.0,
            block_len_1: 1,
            block_len_2: 1,
            replicates: 200,
            extremal_const: 0.1,
            seed: 0,
        }
    }
}

impl TwoSampleConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::Config(format!(
                "delta must be finite and non-negative, got {}",
                self.delta
            )));
        }
        if self.block_len_1 < 1 || self.block_len_2 < 1 {
            return Err(Error::Config("block lengths must be at least 1".into()));
        }
        if self.replicates < 1 {
            return Err(Error::Config("need at least one bootstrap replicate".into()));
        }
        if !(self.extremal_const > 0.0) {
            return Err(Error::Config(format!(
                "extremal-set constant must be positive, got {}",
                self.extremal_const
            )));
        }
        Ok(())
    }
}

/// Estimated extremal sets `Ê⁺`, `Ê⁻` as row-major lists of grid pairs.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ExtremalSets {
    pub plus: Vec<GridPair>,
    pub minus: Vec<GridPair>,
}

impl ExtremalSets {
    pub fn is_empty(&self) -> bool {
        self.plus.is_empty() && self.minus.is_empty()
    }
}

/// `(d̂∞, Ĉ₁ − Ĉ₂)`.
pub fn dhat_two_sample(x: &CurveSample, y: &CurveSample) -> Result<(f64, Surface)> {
    x.ensure_same_grid(y)?;
    let diff = empirical_covariance(x, Divisor::NMinus1)
        .sub(&empirical_covariance(y, Divisor::NMinus1));
    let (value, _) = diff.sup_norm();
    Ok((value, diff))
}

/// Points where `±diff ≥ dhat − threshold`.
pub fn extremal_sets_with_threshold(diff: &Surface, dhat: f64, threshold: f64) -> ExtremalSets {
    let level = dhat - threshold;
    let g = diff.dim();
    let mut sets = ExtremalSets::default();
    for (idx, &v) in diff.values().iter().enumerate() {
        let at = (idx / g, idx % g);
        if v >= level {
            sets.plus.push(at);
        }
        if -v >= level {
            sets.minus.push(at);
        }
    }
    sets
}

/// Extremal sets with threshold `c · ln(m+n) / √(m+n)`.
pub fn estimate_extremal_sets(
    diff: &Surface,
    dhat: f64,
    m: usize,
    n: usize,
    c: f64,
) -> ExtremalSets {
    let size = (m + n) as f64;
    extremal_sets_with_threshold(diff, dhat, c * size.ln() / size.sqrt())
}

/// `B̂(r)` built from squared centred curves, with the multipliers of
/// replicate `r` drawn from `config.seed`.
pub fn bootstrap_field_two_sample(
    x_sq: &[Surface],
    y_sq: &[Surface],
    config: &TwoSampleConfig,
    r: u64,
) -> Result<Surface> {
    let (m, n) = (x_sq.len(), y_sq.len());
    check_block_len(config.block_len_1, m)?;
    check_block_len(config.block_len_2, n)?;
    let xi = gaussian_multipliers(
        MultiplierStream::new(config.seed, r, StreamTag::First),
        m - config.block_len_1 + 1,
    );
    let zeta = gaussian_multipliers(
        MultiplierStream::new(config.seed, r, StreamTag::Second),
        n - config.block_len_2 + 1,
    );
    bootstrap_field_with_multipliers(
        x_sq,
        y_sq,
        config.block_len_1,
        config.block_len_2,
        &xi,
        &zeta,
    )
}

/// `B̂` for explicitly supplied multipliers `ξ` (length `m − l₁ + 1`) and
/// `ζ` (length `n − l₂ + 1`).
pub fn bootstrap_field_with_multipliers(
    x_sq: &[Surface],
    y_sq: &[Surface],
    block_len_1: usize,
    block_len_2: usize,
    xi: &[f64],
    zeta: &[f64],
) -> Result<Surface> {
    let (m, n) = (x_sq.len(), y_sq.len());
    let bx = block_sums(x_sq, block_len_1)?;
    let by = block_sums(y_sq, block_len_2)?;
    if xi.len() != bx.len() || zeta.len() != by.len() {
        return Err(invalid(format!(
            "expected {} and {} multipliers, got {} and {}",
            bx.len(),
            by.len(),
            xi.len(),
            zeta.len()
        )));
    }
    let scale = ((m + n) as f64).sqrt();
    let mut field = Surface::zeros(x_sq[0].dim());
    for (b, w) in bx.iter().zip(xi) {
        field.add_scaled(scale * w / m as f64, b);
    }
    for (b, w) in by.iter().zip(zeta) {
        field.add_scaled(-scale * w / n as f64, b);
    }
    Ok(field)
}

fn check_block_len(l: usize, size: usize) -> Result<()> {
    if l < 1 || l > size {
        return Err(invalid(format!(
            "block length {l} must lie in [1, {size}]"
        )));
    }
    Ok(())
}

/// Centred data and the point estimate shared by both two-sample tests.
#[derive(Debug, Clone)]
pub struct TwoSampleAnalysis {
    m: usize,
    n: usize,
    /// Centred curves of both samples, `(m + n) × G` row-major.
    centred: Vec<f64>,
    pub dhat: f64,
    pub diff: Surface,
    pub argmax: GridPair,
    grid: crate::fda::Grid,
}

impl TwoSampleAnalysis {
    pub fn new(x: &CurveSample, y: &CurveSample) -> Result<Self> {
        x.ensure_same_grid(y)?;
        let (dhat, diff) = dhat_two_sample(x, y)?;
        let (_, argmax) = diff.sup_norm();
        let mut centred = center_sample(x).as_row_major().to_vec();
        centred.extend_from_slice(center_sample(y).as_row_major());
        Ok(Self {
            m: x.len(),
            n: y.len(),
            centred,
            dhat,
            diff,
            argmax,
            grid: x.grid().clone(),
        })
    }

    pub fn sizes(&self) -> (usize, usize) {
        (self.m, self.n)
    }

    fn grid_len(&self) -> usize {
        self.grid.len()
    }

    /// Signed per-curve weights of replicate `r`, such that
    /// `B̂(r) = Σ_j w_j Z̃_j ⊗ Z̃_j` over the stacked centred curves.
    fn replicate_weights(&self, config: &TwoSampleConfig, r: u64) -> Vec<f64> {
        let (m, n) = (self.m, self.n);
        let (l1, l2) = (config.block_len_1, config.block_len_2);
        let xi = gaussian_multipliers(MultiplierStream::new(config.seed, r, StreamTag::First), m - l1 + 1);
        let zeta =
            gaussian_multipliers(MultiplierStream::new(config.seed, r, StreamTag::Second), n - l2 + 1);
        let scale = ((m + n) as f64).sqrt();
        let mut w = observation_weights(&xi, m, l1);
        w.iter_mut().for_each(|v| *v *= scale / m as f64);
        w.extend(
            observation_weights(&zeta, n, l2)
                .into_iter()
                .map(|v| -v * scale / n as f64),
        );
        w
    }

    /// Packed bootstrap field of replicate `r`.
    fn field(&self, config: &TwoSampleConfig, r: u64) -> PackedSym {
        let g = self.grid_len();
        let weights = self.replicate_weights(config, r);
        let mut acc = PackedSym::zeros(g);
        for (curve, w) in self.centred.chunks_exact(g).zip(&weights) {
            acc.add_outer(*w, curve);
        }
        acc
    }

    /// `B̂(r)` as a full surface.
    pub fn bootstrap_field(&self, config: &TwoSampleConfig, r: u64) -> Surface {
        self.field(config, r).to_surface()
    }

    fn check(&self, config: &TwoSampleConfig) -> Result<()> {
        config.validate()?;
        check_block_len(config.block_len_1, self.m)?;
        check_block_len(config.block_len_2, self.n)
    }

    /// `T(r) = max |B̂(r)|`, `r = 1..=R`.
    pub fn classical_draws(&self, config: &TwoSampleConfig) -> Result<BootstrapDraws> {
        self.check(config)?;
        BootstrapDraws::collect(config.replicates, |r| self.field(config, r).sup_abs())
    }

    pub fn extremal_sets(&self, c: f64) -> ExtremalSets {
        estimate_extremal_sets(&self.diff, self.dhat, self.m, self.n, c)
    }

    /// `K(r) = max{ max_{Ê⁺} B̂(r), max_{Ê⁻} −B̂(r) }`, `r = 1..=R`.
    pub fn relevant_draws(
        &self,
        config: &TwoSampleConfig,
        sets: &ExtremalSets,
    ) -> Result<BootstrapDraws> {
        self.check(config)?;
        if sets.is_empty() {
            return Err(Error::Config(
                "both estimated extremal sets are empty".into(),
            ));
        }
        let g = self.grid_len();
        BootstrapDraws::collect(config.replicates, |r| {
            let weights = self.replicate_weights(config, r);
            let at = |(i, k): GridPair| -> f64 {
                self.centred
                    .chunks_exact(g)
                    .zip(&weights)
                    .map(|(c, w)| w * c[i] * c[k])
                    .sum()
            };
            let plus = sets.plus.iter().map(|&p| at(p)).fold(f64::NEG_INFINITY, f64::max);
            let minus = sets.minus.iter().map(|&p| -at(p)).fold(f64::NEG_INFINITY, f64::max);
            plus.max(minus)
        })
    }

    fn meta(&self, config: &TwoSampleConfig, extremal: Option<(usize, usize)>) -> ReportMeta {
        let mut warnings = Vec::new();
        let balance = self.m.min(self.n) as f64 / (self.m + self.n) as f64;
        if balance < 0.1 {
            warnings.push(format!(
                "unbalanced samples: min(m,n)/(m+n) = {balance:.3} < 0.1"
            ));
        }
        ReportMeta {
            block_lengths: vec![config.block_len_1, config.block_len_2],
            seed: config.seed,
            sample_sizes: vec![self.m, self.n],
            argmax: Location::new(&self.grid, self.argmax),
            extremal,
            change_point: None,
            warnings,
        }
    }

    pub fn classical(&self, config: &TwoSampleConfig) -> Result<BootstrapTest> {
        let draws = self.classical_draws(config)?;
        Ok(BootstrapTest {
            kind: TestKind::TwoSampleClassical,
            statistic: self.dhat,
            delta: 0.0,
            sqrt_size: ((self.m + self.n) as f64).sqrt(),
            draws,
            meta: self.meta(config, None),
        })
    }

    pub fn relevant(&self, config: &TwoSampleConfig) -> Result<BootstrapTest> {
        let sets = self.extremal_sets(config.extremal_const);
        let draws = self.relevant_draws(config, &sets)?;
        Ok(BootstrapTest {
            kind: TestKind::TwoSampleRelevant,
            statistic: self.dhat,
            delta: config.delta,
            sqrt_size: ((self.m + self.n) as f64).sqrt(),
            draws,
            meta: self.meta(config, Some((sets.plus.len(), sets.minus.len()))),
        })
    }
}

/// Test of `C₁ = C₂`. Requires `config.delta == 0`.
pub fn classical_two_sample_test(
    x: &CurveSample,
    y: &CurveSample,
    config: &TwoSampleConfig,
) -> Result<TestReport> {
    if config.delta != 0.0 {
        return Err(Error::Config(
            "the classical test needs delta = 0; use the relevant test for delta > 0".into(),
        ));
    }
    TwoSampleAnalysis::new(x, y)?
        .classical(config)?
        .report(config.alpha)
}

/// Test of `d∞ ≤ Δ`. Requires `config.delta > 0`.
pub fn relevant_two_sample_test(
    x: &CurveSample,
    y: &CurveSample,
    config: &TwoSampleConfig,
) -> Result<TestReport> {
    if !(config.delta > 0.0) {
        return Err(Error::Config(
            "the relevant test needs delta > 0; use the classical test for delta = 0".into(),
        ));
    }
    TwoSampleAnalysis::new(x, y)?
        .relevant(config)?
        .report(config.alpha)
}

/// Dispatches on `config.delta`: classical for zero, relevant otherwise.
pub fn two_sample_test(
    x: &CurveSample,
    y: &CurveSample,
    config: &TwoSampleConfig,
) -> Result<TestReport> {
    if config.delta == 0.0 {
        classical_two_sample_test(x, y, config)
    } else {
        relevant_two_sample_test(x, y, config)
    }
}
