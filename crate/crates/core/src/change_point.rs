//! Change-point tests for the covariance operator of a functional time series.
//!
//! With `S_j = X̃_j ⊗ X̃_j` the squared globally centred curves, the sequential
//! process
//!
//! ```text
//! Û(s) = (1/n) ( Σ_{j ≤ ⌊sn⌋} S_j + (sn − ⌊sn⌋) S_{⌊sn⌋+1} − s Σ_j S_j )
//! ```
//!
//! is piecewise linear in `s` with knots `U_k = Û(k/n)`, so every supremum
//! over `s` is a maximum over knots. `M̂ = max_k max_{t,u} |U_k|`.
//!
//! The bootstrap works with `Ŷ_j = S_j − (Ĉ₂ − Ĉ₁)·1{j > ⌊ŝn⌋}` and the
//! field `B̂_k = n^{-1/2} Σ_{k' ≤ k} ξ_{k'} b(k')` for `k ≤ n − l`, where `b`
//! are the block sums of `Ŷ`; for `k > n − l` the field is frozen at
//! `B̂_{n−l}`, which is also the value used for `B̂(1)`. Then
//! `Ŵ_k = B̂_k − (k/n) B̂(1)`.

use serde::{Deserialize, Serialize};

use crate::bootstrap::{
    block_sums, check_alpha, gaussian_multipliers, BootstrapDraws, MultiplierStream, StreamTag,
};
use crate::error::{invalid, Error, Result};
use crate::fda::{center_sample, outer_square, CurveSample, Grid, GridPair, PackedSym, Surface};
use crate::report::{BootstrapTest, ChangePointDetails, Location, ReportMeta, TestKind, TestReport};
use crate::two_sample::{extremal_sets_with_threshold, ExtremalSets};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChangePointConfig {
    pub alpha: f64,
    pub delta: f64,
    pub block_len: usize,
    pub replicates: usize,
    /// `c` in `c_n = c · ln n`.
    pub extremal_const: f64,
    /// Clamp bound `ϑ ∈ (0, 1/2]` for the change-location estimate.
    pub vartheta: f64,
    pub seed: u64,
}

impl Default for ChangePointConfig {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            delta: 0.0,
            block_len: 1,
            replicates: 200,
            extremal_const: 0.1,
            vartheta: 0.1,
            seed: 0,
        }
    }
}

impl ChangePointConfig {
    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(Error::Config(format!(
                "delta must be finite and non-negative, got {}",
                self.delta
            )));
        }
        check_vartheta(self.vartheta)?;
        if self.block_len < 1 {
            return Err(Error::Config("block length must be at least 1".into()));
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

fn check_vartheta(vartheta: f64) -> Result<()> {
    if !(vartheta > 0.0 && vartheta <= 0.5) {
        return Err(Error::Config(format!(
            "vartheta must lie in (0, 0.5], got {vartheta}"
        )));
    }
    Ok(())
}

/// Knots `U_0..U_n` of the sequential process.
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialField {
    pub grid: Grid,
    pub n: usize,
    pub knots: Vec<Surface>,
}

impl SequentialField {
    /// `Û(s)` by linear interpolation between neighbouring knots.
    pub fn at(&self, s: f64) -> Surface {
        interpolate_knots(&self.knots, self.n, s)
    }
}

fn interpolate_knots(knots: &[Surface], n: usize, s: f64) -> Surface {
    let pos = (s.clamp(0.0, 1.0) * n as f64).max(0.0);
    let k = (pos.floor() as usize).min(n);
    let frac = pos - k as f64;
    let mut out = knots[k].clone();
    if k < n && frac > 0.0 {
        out.scale(1.0 - frac);
        out.add_scaled(frac, &knots[k + 1]);
    }
    out
}

pub fn sequential_field(sample: &CurveSample) -> SequentialField {
    let n = sample.len();
    let g = sample.grid_len();
    let centred = center_sample(sample);
    let mut total = PackedSym::zeros(g);
    for c in centred.curves() {
        total.add_outer(1.0, c);
    }
    let mut prefix = PackedSym::zeros(g);
    let mut knots = Vec::with_capacity(n + 1);
    knots.push(Surface::zeros(g));
    for (k, c) in centred.curves().enumerate().map(|(j, c)| (j + 1, c)) {
        prefix.add_outer(1.0, c);
        if k == n {
            knots.push(Surface::zeros(g));
        } else {
            knots.push(cusum_knot(&prefix, &total, k, n).to_surface());
        }
    }
    SequentialField {
        grid: sample.grid().clone(),
        n,
        knots,
    }
}

/// `(1/n)(P_k − (k/n) P_n)`.
fn cusum_knot(prefix: &PackedSym, total: &PackedSym, k: usize, n: usize) -> PackedSym {
    let inv = 1.0 / n as f64;
    let share = k as f64 / n as f64;
    let mut out = prefix.clone();
    for (o, t) in out.data.iter_mut().zip(&total.data) {
        *o = inv * (*o - share * t);
    }
    out
}

/// Location of the maximum of `|U_k(t,u)|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnotMax {
    pub value: f64,
    pub k: usize,
    pub at: GridPair,
}

/// `M̂ = max_k max_{t,u} |U_k(t,u)|`, first maximiser in `(k, row-major)` order.
pub fn mhat(field: &SequentialField) -> KnotMax {
    let mut best = KnotMax {
        value: 0.0,
        k: 0,
        at: (0, 0),
    };
    for (k, knot) in field.knots.iter().enumerate() {
        let (v, at) = knot.sup_norm();
        if v > best.value {
            best = KnotMax { value: v, k, at };
        }
    }
    best
}

/// Clamped change-location estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChangeLocation {
    pub shat: f64,
    /// `argmax_{1 ≤ k < n} max |U_k|`, smallest `k` on ties.
    pub k_argmax: usize,
    /// `⌊ŝ n⌋`, kept inside `[1, n − 1]` so both segments are non-empty.
    pub split: usize,
}

impl ChangeLocation {
    fn from_knot_norms(norms: &[f64], n: usize, vartheta: f64) -> Self {
        let mut k_argmax = 1;
        let mut best = f64::NEG_INFINITY;
        for (k, &v) in norms.iter().enumerate().take(n).skip(1) {
            if v > best {
                best = v;
                k_argmax = k;
            }
        }
        let shat = (k_argmax as f64 / n as f64).clamp(vartheta, 1.0 - vartheta);
        let split = ((shat * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1);
        Self {
            shat,
            k_argmax,
            split,
        }
    }
}

pub fn change_location(field: &SequentialField, vartheta: f64) -> Result<ChangeLocation> {
    check_vartheta(vartheta)?;
    let norms: Vec<f64> = field.knots.iter().map(|k| k.sup_norm().0).collect();
    Ok(ChangeLocation::from_knot_norms(&norms, field.n, vartheta))
}

/// `ŝ = clamp((1/n) argmax_{1≤k<n} ‖U_k‖∞, ϑ, 1−ϑ)`.
pub fn estimate_change_location(field: &SequentialField, vartheta: f64) -> Result<f64> {
    Ok(change_location(field, vartheta)?.shat)
}

/// Segment covariance estimates `(Ĉ₁, Ĉ₂)` for a split after `split` curves.
pub fn segment_covariances(sample: &CurveSample, split: usize) -> Result<(Surface, Surface)> {
    let n = sample.len();
    if split < 1 || split >= n {
        return Err(invalid(format!("split {split} must lie in [1, {}]", n - 1)));
    }
    let (c1, c2) = segment_means(&center_sample(sample), split);
    Ok((c1.to_surface(), c2.to_surface()))
}

fn segment_means(centred: &CurveSample, split: usize) -> (PackedSym, PackedSym) {
    let n = centred.len();
    let g = centred.grid_len();
    let mut c1 = PackedSym::zeros(g);
    let mut c2 = PackedSym::zeros(g);
    for (j, c) in centred.curves().enumerate() {
        if j < split {
            c1.add_outer(1.0, c);
        } else {
            c2.add_outer(1.0, c);
        }
    }
    c1.data.iter_mut().for_each(|v| *v /= split as f64);
    c2.data.iter_mut().for_each(|v| *v /= (n - split) as f64);
    (c1, c2)
}

/// Knots `Ŵ_0..Ŵ_n` of bootstrap replicate `r` for the change estimate `shat`.
pub fn cp_bootstrap_field(
    sample: &CurveSample,
    shat: f64,
    config: &ChangePointConfig,
    r: u64,
) -> Result<Vec<Surface>> {
    let n = sample.len();
    let l = config.block_len;
    if l < 1 || l > n {
        return Err(invalid(format!("block length {l} must lie in [1, {n}]")));
    }
    let xi = gaussian_multipliers(MultiplierStream::new(config.seed, r, StreamTag::First), n - l + 1);
    cp_bootstrap_field_with_multipliers(sample, shat, l, &xi)
}

/// `Ŵ` knots for explicit multipliers `ξ_1..ξ_{n−l+1}`.
pub fn cp_bootstrap_field_with_multipliers(
    sample: &CurveSample,
    shat: f64,
    block_len: usize,
    xi: &[f64],
) -> Result<Vec<Surface>> {
    let n = sample.len();
    let l = block_len;
    let split = ((shat * n as f64 + 1e-9).floor() as usize).clamp(1, n - 1);
    let centred = center_sample(sample);
    let (c1, c2) = segment_covariances(sample, split)?;
    let jump = c2.sub(&c1);
    let adjusted: Vec<Surface> = centred
        .curves()
        .enumerate()
        .map(|(j, c)| {
            let mut s = outer_square(c);
            if j + 1 > split {
                s.add_scaled(-1.0, &jump);
            }
            s
        })
        .collect();
    let blocks = block_sums(&adjusted, l)?;
    if xi.len() != blocks.len() {
        return Err(invalid(format!(
            "expected {} multipliers, got {}",
            blocks.len(),
            xi.len()
        )));
    }
    let g = sample.grid_len();
    let scale = 1.0 / (n as f64).sqrt();
    let mut b = vec![Surface::zeros(g)];
    for k in 1..=n {
        let mut next = b[k - 1].clone();
        if k <= n - l {
            next.add_scaled(scale * xi[k - 1], &blocks[k - 1]);
        }
        b.push(next);
    }
    let b_one = b[n - l].clone();
    Ok(b
        .into_iter()
        .enumerate()
        .map(|(k, mut bk)| {
            bk.add_scaled(-(k as f64) / n as f64, &b_one);
            bk
        })
        .collect())
}

/// Number of replicates sharing one sweep over the block sums.
const REPLICATE_BATCH: usize = 8;

/// Centred data, `M̂`, `ŝ` and the adjusted block sums of one series.
#[derive(Debug, Clone)]
pub struct ChangePointAnalysis {
    grid: Grid,
    n: usize,
    centred: CurveSample,
    pub mhat: KnotMax,
    pub location: ChangeLocation,
    /// `Ĉ₁ − Ĉ₂` for the estimated split.
    pub segment_diff: Surface,
    jump: PackedSym,
}

impl ChangePointAnalysis {
    pub fn new(sample: &CurveSample, vartheta: f64) -> Result<Self> {
        check_vartheta(vartheta)?;
        let n = sample.len();
        let g = sample.grid_len();
        let centred = center_sample(sample);

        let mut total = PackedSym::zeros(g);
        for c in centred.curves() {
            total.add_outer(1.0, c);
        }
        let mut prefix = PackedSym::zeros(g);
        let mut norms = vec![0.0; n + 1];
        let mut best = KnotMax {
            value: 0.0,
            k: 0,
            at: (0, 0),
        };
        for (j, c) in centred.curves().enumerate().take(n - 1) {
            let k = j + 1;
            prefix.add_outer(1.0, c);
            let knot = cusum_knot(&prefix, &total, k, n);
            let (v, at) = packed_argmax(&knot);
            norms[k] = v;
            if v > best.value {
                best = KnotMax { value: v, k, at };
            }
        }
        let location = ChangeLocation::from_knot_norms(&norms, n, vartheta);
        let (c1, c2) = segment_means(&centred, location.split);
        let mut jump = c2.clone();
        jump.add_scaled(-1.0, &c1);
        let mut diff = c1;
        diff.add_scaled(-1.0, &c2);
        Ok(Self {
            grid: sample.grid().clone(),
            n,
            centred,
            mhat: best,
            location,
            segment_diff: diff.to_surface(),
            jump,
        })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    fn check(&self, config: &ChangePointConfig) -> Result<()> {
        config.validate()?;
        if config.block_len > self.n {
            return Err(invalid(format!(
                "block length {} exceeds the sample size {}",
                config.block_len, self.n
            )));
        }
        Ok(())
    }

    /// `Ŷ_j` values at a single grid pair.
    fn adjusted_at(&self, (i, k): GridPair) -> Vec<f64> {
        let jump = self.jump.get(i, k);
        self.centred
            .curves()
            .enumerate()
            .map(|(j, c)| {
                let v = c[i] * c[k];
                if j + 1 > self.location.split {
                    v - jump
                } else {
                    v
                }
            })
            .collect()
    }

    /// Packed block sums `b(1..=n−l)` of `Ŷ`, flattened.
    fn packed_block_sums(&self, l: usize) -> Vec<PackedSym> {
        let n = self.n;
        let g = self.grid.len();
        let split = self.location.split;
        let adjusted: Vec<PackedSym> = self
            .centred
            .curves()
            .enumerate()
            .map(|(j, c)| {
                let mut s = PackedSym::zeros(g);
                s.add_outer(1.0, c);
                if j + 1 > split {
                    s.add_scaled(-1.0, &self.jump);
                }
                s
            })
            .collect();
        let mut total = PackedSym::zeros(g);
        for s in &adjusted {
            total.add_scaled(1.0, s);
        }
        let norm = 1.0 / (l as f64).sqrt();
        let share = l as f64 / n as f64;
        let mut window = PackedSym::zeros(g);
        for s in &adjusted[..l] {
            window.add_scaled(1.0, s);
        }
        let mut out = Vec::with_capacity(n - l);
        for k in 0..n - l {
            if k > 0 {
                window.add_scaled(1.0, &adjusted[k + l - 1]);
                window.add_scaled(-1.0, &adjusted[k - 1]);
            }
            let mut b = window.clone();
            for (v, t) in b.data.iter_mut().zip(&total.data) {
                *v = norm * (*v - share * t);
            }
            out.push(b);
        }
        out
    }

    /// `Ť(r) = max_k max_{t,u} |Ŵ_k(r)|`, `r = 1..=R`.
    pub fn classical_draws(&self, config: &ChangePointConfig) -> Result<BootstrapDraws> {
        self.check(config)?;
        let n = self.n;
        let l = config.block_len;
        let blocks = self.packed_block_sums(l);
        let p = PackedSym::zeros(self.grid.len()).data.len();
        let scale = 1.0 / (n as f64).sqrt();
        let tail = (l - 1) as f64 / n as f64;

        let batches = config.replicates.div_ceil(REPLICATE_BATCH);
        BootstrapDraws::collect_batched(batches, |batch| {
            let first = (batch * REPLICATE_BATCH) as u64 + 1;
            let last = ((batch + 1) * REPLICATE_BATCH).min(config.replicates) as u64;
            let coeffs: Vec<Vec<f64>> = (first..=last)
                .map(|r| {
                    let xi = gaussian_multipliers(
                        MultiplierStream::new(config.seed, r, StreamTag::First),
                        n - l + 1,
                    );
                    xi.iter().map(|x| x * scale).collect()
                })
                .collect();
            let width = coeffs.len();

            // B̂(1) = B̂_{n−l}
            let mut finals = vec![vec![0.0; p]; width];
            for (k, b) in blocks.iter().enumerate() {
                for (f, c) in finals.iter_mut().zip(&coeffs) {
                    let w = c[k];
                    for (fv, bv) in f.iter_mut().zip(&b.data) {
                        *fv += w * bv;
                    }
                }
            }

            let mut running = vec![vec![0.0; p]; width];
            let mut maxima: Vec<f64> = finals
                .iter()
                .map(|f| tail * f.iter().fold(0.0f64, |m, v| m.max(v.abs())))
                .collect();
            for (k, b) in blocks.iter().enumerate() {
                let share = (k + 1) as f64 / n as f64;
                for ((acc, f), (c, best)) in running
                    .iter_mut()
                    .zip(&finals)
                    .zip(coeffs.iter().zip(maxima.iter_mut()))
                {
                    *best = best.max(accumulate_max_dev(acc, &b.data, c[k], f, share));
                }
            }
            maxima
        })
    }

    /// `d̂∞ = M̂ / (ŝ(1 − ŝ))`.
    pub fn dhat(&self) -> f64 {
        let s = self.location.shat;
        self.mhat.value / (s * (1.0 - s))
    }

    /// `Ê±` from `Ĉ₁ − Ĉ₂` with threshold `c · ln n / √n`.
    pub fn extremal_sets(&self, c: f64) -> ExtremalSets {
        let n = self.n as f64;
        extremal_sets_with_threshold(&self.segment_diff, self.dhat(), c * n.ln() / n.sqrt())
    }

    /// `Ǩ(r) = max{ max_{Ê⁺} Ŵ(ŝ), max_{Ê⁻} −Ŵ(ŝ) } / (ŝ(1−ŝ))`.
    pub fn relevant_draws(
        &self,
        config: &ChangePointConfig,
        sets: &ExtremalSets,
    ) -> Result<BootstrapDraws> {
        self.check(config)?;
        if sets.is_empty() {
            return Err(Error::Config(
                "both estimated extremal sets are empty".into(),
            ));
        }
        let n = self.n;
        let l = config.block_len;
        let shat = self.location.shat;
        let norm = 1.0 / (shat * (1.0 - shat));
        let pos = shat * n as f64;
        let k0 = ((pos + 1e-9).floor() as usize).min(n);
        let frac = (pos - k0 as f64).max(0.0);

        // block sums b(1..=n−l) restricted to each extremal point
        let point_blocks = |p: GridPair| -> Vec<f64> {
            let y = self.adjusted_at(p);
            let total: f64 = y.iter().sum();
            let share = l as f64 / n as f64 * total;
            let norm = 1.0 / (l as f64).sqrt();
            (0..n - l)
                .map(|k| norm * (y[k..k + l].iter().sum::<f64>() - share))
                .collect()
        };
        let plus: Vec<Vec<f64>> = sets.plus.iter().map(|&p| point_blocks(p)).collect();
        let minus: Vec<Vec<f64>> = sets.minus.iter().map(|&p| point_blocks(p)).collect();
        let scale = 1.0 / (n as f64).sqrt();
        let w_at = |blocks: &[f64], xi: &[f64]| -> f64 {
            // B̂_k for k ≤ n − l; frozen beyond
            let b = |k: usize| -> f64 {
                let k = k.min(n - l);
                scale * blocks[..k].iter().zip(xi).map(|(b, x)| b * x).sum::<f64>()
            };
            let b_one = b(n);
            let w = |k: usize| b(k) - k as f64 / n as f64 * b_one;
            if frac > 0.0 && k0 < n {
                (1.0 - frac) * w(k0) + frac * w(k0 + 1)
            } else {
                w(k0)
            }
        };
        BootstrapDraws::collect(config.replicates, |r| {
            let xi = gaussian_multipliers(
                MultiplierStream::new(config.seed, r, StreamTag::First),
                n - l + 1,
            );
            let up = plus.iter().map(|b| w_at(b, &xi)).fold(f64::NEG_INFINITY, f64::max);
            let down = minus.iter().map(|b| -w_at(b, &xi)).fold(f64::NEG_INFINITY, f64::max);
            norm * up.max(down)
        })
    }

    fn meta(&self, config: &ChangePointConfig, extremal: Option<(usize, usize)>) -> ReportMeta {
        let frozen = self.location.split > self.n - config.block_len.min(self.n);
        let mut warnings = Vec::new();
        if frozen && extremal.is_some() {
            warnings.push(format!(
                "floor(shat*n) = {} lies in the frozen tail (> n - l = {}); the bootstrap field is evaluated at its frozen value",
                self.location.split,
                self.n - config.block_len
            ));
        }
        ReportMeta {
            block_lengths: vec![config.block_len],
            seed: config.seed,
            sample_sizes: vec![self.n],
            argmax: Location::new(&self.grid, self.mhat.at),
            extremal,
            change_point: Some(ChangePointDetails {
                shat: self.location.shat,
                k_argmax: self.location.k_argmax,
                split: self.location.split,
                shat_in_frozen_tail: frozen,
            }),
            warnings,
        }
    }

    pub fn classical(&self, config: &ChangePointConfig) -> Result<BootstrapTest> {
        let draws = self.classical_draws(config)?;
        Ok(BootstrapTest {
            kind: TestKind::ChangePointClassical,
            statistic: self.mhat.value,
            delta: 0.0,
            sqrt_size: (self.n as f64).sqrt(),
            draws,
            meta: self.meta(config, None),
        })
    }

    pub fn relevant(&self, config: &ChangePointConfig) -> Result<BootstrapTest> {
        let sets = self.extremal_sets(config.extremal_const);
        let draws = self.relevant_draws(config, &sets)?;
        Ok(BootstrapTest {
            kind: TestKind::ChangePointRelevant,
            statistic: self.dhat(),
            delta: config.delta,
            sqrt_size: (self.n as f64).sqrt(),
            draws,
            meta: self.meta(config, Some((sets.plus.len(), sets.minus.len()))),
        })
    }
}

/// `acc += w · block`, returning `max |acc − share · fin|`.
fn accumulate_max_dev(acc: &mut [f64], block: &[f64], w: f64, fin: &[f64], share: f64) -> f64 {
    const LANES: usize = 8;
    let mut lanes = [0.0f64; LANES];
    let split = acc.len() - acc.len() % LANES;
    let (acc_head, acc_tail) = acc.split_at_mut(split);
    for ((a, b), f) in acc_head
        .chunks_exact_mut(LANES)
        .zip(block.chunks_exact(LANES))
        .zip(fin.chunks_exact(LANES))
    {
        for i in 0..LANES {
            a[i] += w * b[i];
            let d = (a[i] - share * f[i]).abs();
            lanes[i] = if d > lanes[i] { d } else { lanes[i] };
        }
    }
    let mut best = lanes.iter().fold(0.0f64, |m, &v| m.max(v));
    for ((a, b), f) in acc_tail.iter_mut().zip(&block[split..]).zip(&fin[split..]) {
        *a += w * b;
        best = best.max((*a - share * f).abs());
    }
    best
}

fn packed_argmax(p: &PackedSym) -> (f64, GridPair) {
    let g = p.dim();
    let mut best = 0.0;
    let mut at = (0, 0);
    let mut off = 0;
    for i in 0..g {
        for k in i..g {
            let v = p.data[off + k - i].abs();
            if v > best {
                best = v;
                at = (i, k);
            }
        }
        off += g - i;
    }
    (best, at)
}

/// Test of `C₁ = C₂` (no change). Requires `config.delta == 0`.
pub fn classical_cp_test(sample: &CurveSample, config: &ChangePointConfig) -> Result<TestReport> {
    if config.delta != 0.0 {
        return Err(Error::Config(
            "the classical test needs delta = 0; use the relevant test for delta > 0".into(),
        ));
    }
    config.validate()?;
    ChangePointAnalysis::new(sample, config.vartheta)?
        .classical(config)?
        .report(config.alpha)
}

/// Test of `d∞ ≤ Δ` for the change. Requires `config.delta > 0`.
pub fn relevant_cp_test(sample: &CurveSample, config: &ChangePointConfig) -> Result<TestReport> {
    if !(config.delta > 0.0) {
        return Err(Error::Config(
            "the relevant test needs delta > 0; use the classical test for delta = 0".into(),
        ));
    }
    config.validate()?;
    ChangePointAnalysis::new(sample, config.vartheta)?
        .relevant(config)?
        .report(config.alpha)
}

/// Dispatches on `config.delta`.
pub fn change_point_test(sample: &CurveSample, config: &ChangePointConfig) -> Result<TestReport> {
    if config.delta == 0.0 {
        classical_cp_test(sample, config)
    } else {
        relevant_cp_test(sample, config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fda::Curve;

    fn sample(rows: &[&[f64]]) -> CurveSample {
        let grid = Grid::uniform(rows[0].len()).unwrap();
        CurveSample::from_curves(grid, rows.iter().map(|r| Curve(r.to_vec())).collect()).unwrap()
    }

    fn toy() -> CurveSample {
        sample(&[
            &[0.3, -1.0, 0.2],
            &[1.5, 0.4, -0.7],
            &[-0.2, 0.9, 1.1],
            &[2.0, -0.5, 0.0],
            &[0.1, 0.1, -1.3],
            &[-1.4, 2.2, 0.6],
        ])
    }

    #[test]
    fn boundary_knots_vanish() {
        let f = sequential_field(&toy());
        assert_eq!(f.knots.len(), 7);
        assert!(f.knots[0].values().iter().all(|&v| v == 0.0));
        assert!(f.knots[6].values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn two_point_knot_by_hand() {
        let (a, b) = (3.0, -1.0);
        let s = sample(&[&[a, a], &[b, b]]);
        let f = sequential_field(&s);
        let at = (a - b) / 2.0;
        let bt = (b - a) / 2.0;
        let expected = 0.5 * (at * at - 0.5 * (at * at + bt * bt));
        assert!((f.knots[1].get(0, 0) - expected).abs() < 1e-15);
    }

    #[test]
    fn constant_sample_has_zero_mhat() {
        let s = sample(&[&[1.0, 2.0], &[1.0, 2.0], &[1.0, 2.0]]);
        assert_eq!(mhat(&sequential_field(&s)).value, 0.0);
    }

    #[test]
    fn streaming_analysis_matches_field() {
        let s = toy();
        let f = sequential_field(&s);
        let a = ChangePointAnalysis::new(&s, 0.1).unwrap();
        let m = mhat(&f);
        assert!((a.mhat.value - m.value).abs() < 1e-14);
        assert_eq!(a.mhat.k, m.k);
        assert_eq!(a.location, change_location(&f, 0.1).unwrap());
    }

    #[test]
    fn change_location_clamps() {
        // variance concentrated in the first curve puts the argmax at k = 1
        let s = sample(&[
            &[10.0, 10.0],
            &[0.0, 0.0],
            &[0.1, 0.1],
            &[0.0, 0.0],
            &[0.1, 0.1],
            &[0.0, 0.0],
            &[0.1, 0.1],
            &[0.0, 0.0],
            &[0.1, 0.1],
            &[0.0, 0.0],
        ]);
        let f = sequential_field(&s);
        let loc = change_location(&f, 0.1).unwrap();
        assert_eq!(loc.k_argmax, 1);
        assert_eq!(loc.shat, 0.1);
        assert_eq!(estimate_change_location(&f, 0.3).unwrap(), 0.3);
        assert!(estimate_change_location(&f, 0.0).is_err());
        assert!(estimate_change_location(&f, 0.6).is_err());
    }

    #[test]
    fn zero_multipliers_give_zero_field() {
        let w = cp_bootstrap_field_with_multipliers(&toy(), 0.5, 2, &[0.0; 5]).unwrap();
        assert!(w.iter().all(|k| k.values().iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn bootstrap_field_vanishes_at_both_ends() {
        let cfg = ChangePointConfig {
            block_len: 2,
            seed: 5,
            ..Default::default()
        };
        let w = cp_bootstrap_field(&toy(), 0.5, &cfg, 3).unwrap();
        assert!(w[0].values().iter().all(|&v| v == 0.0));
        assert!(w[6].values().iter().all(|&v| v.abs() < 1e-15));
    }

    #[test]
    fn classical_draws_match_literal_field() {
        let s = toy();
        let cfg = ChangePointConfig {
            block_len: 2,
            replicates: 11,
            seed: 17,
            ..Default::default()
        };
        let a = ChangePointAnalysis::new(&s, cfg.vartheta).unwrap();
        let draws = a.classical_draws(&cfg).unwrap();
        for r in 1..=11u64 {
            let w = cp_bootstrap_field(&s, a.location.shat, &cfg, r).unwrap();
            let t = w.iter().map(|k| k.sup_norm().0).fold(0.0, f64::max);
            assert!((t - draws.values()[r as usize - 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn relevant_draws_match_literal_field() {
        let s = toy();
        let cfg = ChangePointConfig {
            block_len: 2,
            replicates: 7,
            seed: 3,
            delta: 0.1,
            ..Default::default()
        };
        let a = ChangePointAnalysis::new(&s, cfg.vartheta).unwrap();
        let sets = a.extremal_sets(cfg.extremal_const);
        let draws = a.relevant_draws(&cfg, &sets).unwrap();
        let shat = a.location.shat;
        for r in 1..=7u64 {
            let knots = cp_bootstrap_field(&s, shat, &cfg, r).unwrap();
            let w = interpolate_knots(&knots, 6, shat);
            let up = sets.plus.iter().map(|&(i, k)| w.get(i, k)).fold(f64::NEG_INFINITY, f64::max);
            let down = sets.minus.iter().map(|&(i, k)| -w.get(i, k)).fold(f64::NEG_INFINITY, f64::max);
            let expected = up.max(down) / (shat * (1.0 - shat));
            assert!((expected - draws.values()[r as usize - 1]).abs() < 1e-12);
        }
    }

    #[test]
    fn delta_selects_the_path() {
        let s = toy();
        let rel = ChangePointConfig {
            delta: 1.0,
            replicates: 10,
            ..Default::default()
        };
        assert!(classical_cp_test(&s, &rel).is_err());
        assert!(relevant_cp_test(&s, &ChangePointConfig::default()).is_err());
        let rep = change_point_test(&s, &rel).unwrap();
        assert_eq!(rep.test, TestKind::ChangePointRelevant);
        assert!(rep.change_point.is_some());
    }

    #[test]
    fn block_length_larger_than_sample_errors() {
        let cfg = ChangePointConfig {
            block_len: 7,
            ..Default::default()
        };
        assert!(classical_cp_test(&toy(), &cfg).is_err());
    }
}
