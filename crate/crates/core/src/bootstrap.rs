//! Multiplier block bootstrap machinery.
//!
//! Every replicate draws its Gaussian multipliers from its own
//! [`MultiplierStream`], keyed by `(seed, replicate, tag)`. Replicates are
//! evaluated in parallel and collected in replicate order, so the draws are
//! identical for any worker count.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fda::Surface;

/// SplitMix64 finaliser.
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Child seed for `index` under `base`: `splitmix64(base ^ splitmix64(index))`.
///
/// Used for run seeds (base seed, run index) and replicate seeds (bootstrap
/// seed, replicate index) alike.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    splitmix64(base ^ splitmix64(index))
}

/// Which multiplier sequence of a replicate a stream feeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StreamTag {
    /// `ξ`: first sample, or the single series of a change-point test.
    First,
    /// `ζ`: second sample.
    Second,
}

impl StreamTag {
    fn id(self) -> u64 {
        match self {
            StreamTag::First => 0,
            StreamTag::Second => 1,
        }
    }
}

/// Deterministic source of i.i.d. standard normal multipliers.
///
/// The generator is ChaCha8 seeded with `derive_seed(seed, replicate)`; the
/// tag selects the ChaCha stream, so `ξ` and `ζ` of one replicate never
/// overlap.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MultiplierStream {
    pub seed: u64,
    pub replicate: u64,
    pub tag: StreamTag,
}

impl MultiplierStream {
    pub fn new(seed: u64, replicate: u64, tag: StreamTag) -> Self {
        Self {
            seed,
            replicate,
            tag,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, self.replicate));
        rng.set_stream(self.tag.id());
        rng
    }
}

pub fn gaussian_multipliers(stream: MultiplierStream, count: usize) -> Vec<f64> {
    let mut rng = stream.rng();
    (0..count).map(|_| rng.sample(StandardNormal)).collect()
}

/// Centred, scaled block partial sums
/// `(1/√l)(Σ_{j=k}^{k+l-1} S_j − (l/n) Σ_j S_j)` for `k = 1..=n-l+1`.
pub fn block_sums(surfaces: &[Surface], block_len: usize) -> Result<Vec<Surface>> {
    let n = surfaces.len();
    if block_len < 1 || block_len > n {
        return Err(invalid(format!(
            "block length {block_len} must lie in [1, {n}]"
        )));
    }
    let dim = surfaces[0].dim();
    if surfaces.iter().any(|s| s.dim() != dim) {
        return Err(invalid("surfaces have different dimensions"));
    }
    let mut total = Surface::zeros(dim);
    for s in surfaces {
        total.add_scaled(1.0, s);
    }
    let norm = 1.0 / (block_len as f64).sqrt();
    let share = block_len as f64 / n as f64;
    Ok(surfaces
        .windows(block_len)
        .map(|window| {
            let mut acc = Surface::zeros(dim);
            for s in window {
                acc.add_scaled(1.0, s);
            }
            acc.add_scaled(-share, &total);
            acc.scale(norm);
            acc
        })
        .collect())
}

/// Per-observation weights `v_j` with `Σ_k ξ_k · block_sum_k = Σ_j v_j S_j`.
///
/// `multipliers` holds `ξ_1..ξ_K` for the first `K ≤ n - l + 1` blocks.
pub(crate) fn observation_weights(multipliers: &[f64], n: usize, block_len: usize) -> Vec<f64> {
    debug_assert!(multipliers.len() + block_len <= n + 1);
    let total: f64 = multipliers.iter().sum();
    let norm = 1.0 / (block_len as f64).sqrt();
    let share = block_len as f64 / n as f64 * total;
    let mut weights = vec![0.0; n];
    for (k, xi) in multipliers.iter().enumerate() {
        for w in &mut weights[k..k + block_len] {
            *w += xi;
        }
    }
    weights.iter_mut().for_each(|w| *w = norm * (*w - share));
    weights
}

/// Replicate-indexed bootstrap statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BootstrapDraws {
    values: Vec<f64>,
}

impl BootstrapDraws {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(invalid("bootstrap sample is empty"));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(invalid("bootstrap sample contains NaN"));
        }
        Ok(Self { values })
    }

    /// Evaluates `statistic(r)` for `r = 1..=replicates` in parallel,
    /// keeping replicate order.
    pub fn collect<F>(replicates: usize, statistic: F) -> Result<Self>
    where
        F: Fn(u64) -> f64 + Sync + Send,
    {
        let values: Vec<f64> = (1..=replicates as u64)
            .into_par_iter()
            .map(statistic)
            .collect();
        Self::new(values)
    }

    /// Like [`collect`](Self::collect) for statistics computed in batches:
    /// `batch(b)` returns the draws of batch `b`, batches are concatenated in
    /// order.
    pub fn collect_batched<F>(batches: usize, batch: F) -> Result<Self>
    where
        F: Fn(usize) -> Vec<f64> + Sync + Send,
    {
        let parts: Vec<Vec<f64>> = (0..batches).into_par_iter().map(batch).collect();
        Self::new(parts.into_iter().flatten().collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// 1-based order-statistic index `⌊R(1−α)⌋`, clamped to `[1, R]`.
    pub fn quantile_index(&self, alpha: f64) -> Result<usize> {
        check_alpha(alpha)?;
        let r = self.values.len();
        // 1e-9 absorbs representation error such as 200 * 0.95 = 189.999…
        let idx = (r as f64 * (1.0 - alpha) + 1e-9).floor() as usize;
        Ok(idx.clamp(1, r))
    }

    /// Empirical `(1−α)`-quantile: the `⌊R(1−α)⌋`-th smallest draw.
    pub fn quantile(&self, alpha: f64) -> Result<f64> {
        let idx = self.quantile_index(alpha)?;
        let mut sorted = self.values.clone();
        sorted.sort_by(f64::total_cmp);
        Ok(sorted[idx - 1])
    }
}

/// Runs `f` on a dedicated pool of `workers` threads, or on the global pool
/// when `workers` is `None`. Results do not depend on the choice.
pub fn with_workers<T, F>(workers: Option<usize>, f: F) -> Result<T>
where
    T: Send,
    F: FnOnce() -> T + Send,
{
    match workers {
        None => Ok(f()),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w.max(1))
                .build()
                .map_err(|e| invalid(format!("cannot build a pool of {w} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

pub fn quantile(draws: &BootstrapDraws, alpha: f64) -> Result<f64> {
    draws.quantile(alpha)
}

pub(crate) fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(invalid(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar(v: f64) -> Surface {
        Surface::from_values(1, vec![v]).unwrap()
    }

    #[test]
    fn block_sums_full_block_is_zero() {
        let s: Vec<Surface> = [1.0, 5.0, -2.0].iter().map(|&v| scalar(v)).collect();
        let b = block_sums(&s, 3).unwrap();
        assert_eq!(b.len(), 1);
        assert!(b[0].values()[0].abs() < 1e-15);
    }

    #[test]
    fn block_sums_unit_blocks() {
        let s: Vec<Surface> = [1.0, 2.0, 3.0].iter().map(|&v| scalar(v)).collect();
        let b = block_sums(&s, 1).unwrap();
        let got: Vec<f64> = b.iter().map(|s| s.values()[0]).collect();
        assert_eq!(got, vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn block_sums_rejects_bad_length() {
        let s: Vec<Surface> = [1.0, 2.0].iter().map(|&v| scalar(v)).collect();
        assert!(block_sums(&s, 0).is_err());
        assert!(block_sums(&s, 3).is_err());
    }

    #[test]
    fn observation_weights_match_block_sums() {
        let vals = [0.3, -1.2, 2.0, 0.7, 1.1, -0.4];
        let s: Vec<Surface> = vals.iter().map(|&v| scalar(v)).collect();
        let xi = [0.5, -1.0, 2.0, 0.25];
        let blocks = block_sums(&s, 3).unwrap();
        let direct: f64 = blocks.iter().zip(&xi).map(|(b, x)| b.values()[0] * x).sum();
        let w = observation_weights(&xi, 6, 3);
        let via: f64 = w.iter().zip(&vals).map(|(w, v)| w * v).sum();
        assert!((direct - via).abs() < 1e-12);
    }

    #[test]
    fn quantile_examples() {
        let d = BootstrapDraws::new((1..=200).map(f64::from).collect()).unwrap();
        assert_eq!(d.quantile(0.05).unwrap(), 190.0);
        assert_eq!(d.quantile(0.01).unwrap(), 198.0);
        assert_eq!(d.quantile(0.10).unwrap(), 180.0);
        let one = BootstrapDraws::new(vec![3.5]).unwrap();
        assert_eq!(one.quantile(0.05).unwrap(), 3.5);
        assert_eq!(one.quantile(0.9).unwrap(), 3.5);
        assert!(d.quantile(0.0).is_err());
        assert!(d.quantile(1.0).is_err());
        assert!(BootstrapDraws::new(vec![]).is_err());
    }

    #[test]
    fn multipliers_are_reproducible_and_tagged() {
        let s = MultiplierStream::new(42, 3, StreamTag::First);
        assert!(gaussian_multipliers(s, 0).is_empty());
        assert_eq!(gaussian_multipliers(s, 16), gaussian_multipliers(s, 16));
        let other = MultiplierStream::new(42, 3, StreamTag::Second);
        assert_ne!(gaussian_multipliers(s, 16), gaussian_multipliers(other, 16));
        let next = MultiplierStream::new(42, 4, StreamTag::First);
        assert_ne!(gaussian_multipliers(s, 16), gaussian_multipliers(next, 16));
    }

    #[test]
    fn multipliers_are_standard_normal() {
        let n = 100_000;
        let v = gaussian_multipliers(MultiplierStream::new(7, 1, StreamTag::First), n);
        let mean = v.iter().sum::<f64>() / n as f64;
        let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!(mean.abs() < 4.0 / (n as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn collect_is_order_stable() {
        let d = BootstrapDraws::collect(50, |r| r as f64 * 2.0).unwrap();
        assert_eq!(d.values()[0], 2.0);
        assert_eq!(d.values()[49], 100.0);
    }

    proptest! {
        #[test]
        fn quantile_matches_sorted_index(values in prop::collection::vec(-1e3f64..1e3, 1..80), alpha in 0.001f64..0.999) {
            let d = BootstrapDraws::new(values.clone()).unwrap();
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let idx = ((values.len() as f64 * (1.0 - alpha)) + 1e-9).floor().max(1.0) as usize;
            prop_assert_eq!(d.quantile(alpha).unwrap(), sorted[idx.min(values.len()) - 1]);
        }

        #[test]
        fn quantile_non_increasing_in_alpha(values in prop::collection::vec(-1e3f64..1e3, 1..80), a in 0.001f64..0.999, b in 0.001f64..0.999) {
            let d = BootstrapDraws::new(values).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(d.quantile(lo).unwrap() >= d.quantile(hi).unwrap());
        }

        #[test]
        fn unit_block_sums_cancel(values in prop::collection::vec(-10f64..10.0, 2..12)) {
            let s: Vec<Surface> = values.iter().map(|&v| scalar(v)).collect();
            let total: f64 = block_sums(&s, 1).unwrap().iter().map(|b| b.values()[0]).sum();
            prop_assert!(total.abs() < 1e-10);
        }
    }
}
