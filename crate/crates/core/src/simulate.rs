//! Data-generating processes for the simulation designs.
//!
//! All generators are pure functions of their arguments and seed: the same
//! inputs give bit-identical samples. Randomness comes from ChaCha8 seeded
//! with the scenario seed; two-sample designs draw the samples from separate
//! ChaCha streams.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::basis::{fourier_design, BSplineBasis};
use crate::error::{invalid, Error, Result};
use crate::fda::{CurveSample, Grid};

/// Steps discarded before recording an fAR(1) series.
pub const FAR1_BURN_IN: usize = 200;

/// Number of Fourier functions carrying the fAR(1) coefficients.
pub const FAR1_DIM: usize = 55;

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn t5() -> StudentT<f64> {
    StudentT::new(5.0).expect("5 degrees of freedom")
}

/// Ten-term sine/cosine expansion with `t₅` coefficients; the second sample
/// is scaled by `c`.
pub fn gen_sincos_t5(
    m: usize,
    n: usize,
    c: f64,
    grid: &Grid,
    seed: u64,
) -> Result<(CurveSample, CurveSample)> {
    if m < 2 || n < 2 {
        return Err(invalid("both samples need at least 2 curves"));
    }
    let x = sincos_curves(m, 1.0, grid, &mut rng_for(seed, 0))?;
    let y = sincos_curves(n, c, grid, &mut rng_for(seed, 1))?;
    Ok((x, y))
}

fn sincos_curves(count: usize, factor: f64, grid: &Grid, rng: &mut ChaCha8Rng) -> Result<CurveSample> {
    let dist = t5();
    let pts = grid.points();
    let terms: Vec<(Vec<f64>, Vec<f64>)> = (1..=10)
        .map(|k| {
            let kf = k as f64;
            let sin: Vec<f64> = pts
                .iter()
                .map(|&t| 2f64.sqrt() / kf.sqrt() * (PI * kf * t).sin())
                .collect();
            let cos: Vec<f64> = pts
                .iter()
                .map(|&t| 1.0 / kf.sqrt() * (2.0 * PI * kf * t).cos())
                .collect();
            (sin, cos)
        })
        .collect();
    let mut data = vec![0.0; count * pts.len()];
    for curve in data.chunks_exact_mut(pts.len()) {
        for (sin, cos) in &terms {
            let v = dist.sample(rng);
            let w = dist.sample(rng);
            for ((x, s), co) in curve.iter_mut().zip(sin).zip(cos) {
                *x += s * v + co * w;
            }
        }
        curve.iter_mut().for_each(|x| *x *= factor);
    }
    CurveSample::from_row_major(grid.clone(), data)
}

/// Population covariance of the sine/cosine design at `(s, t)`.
pub fn sincos_covariance(s: f64, t: f64) -> f64 {
    let var_t5 = 5.0 / 3.0;
    var_t5
        * (1..=10)
            .map(|k| {
                let kf = k as f64;
                2.0 * (PI * kf * s).sin() * (PI * kf * t).sin() / kf
                    + (2.0 * PI * kf * s).cos() * (2.0 * PI * kf * t).cos() / kf
            })
            .sum::<f64>()
}

/// Distribution of the spline coefficients `N_i`, both with variance `1/i²`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoeffDist {
    #[default]
    Gaussian,
    /// `t₅ · √(3/(5 i²))`.
    T5Scaled,
}

impl CoeffDist {
    fn draw(self, i: usize, rng: &mut ChaCha8Rng) -> f64 {
        let fi = i as f64;
        match self {
            CoeffDist::Gaussian => rng.sample::<f64, _>(StandardNormal) / fi,
            CoeffDist::T5Scaled => t5().sample(rng) * (3.0 / (5.0 * fi * fi)).sqrt(),
        }
    }
}

/// Spline innovation curves `ε = Σ_{i=1}^{21} N_i ν_i` on a fixed grid.
#[derive(Debug, Clone)]
pub struct SplineErrors {
    design: Vec<Vec<f64>>,
    dist: CoeffDist,
}

impl SplineErrors {
    pub fn new(grid: &Grid, dist: CoeffDist) -> Self {
        Self {
            design: BSplineBasis::cubic21().design(grid.points()),
            dist,
        }
    }

    /// Coefficients of one innovation, `N_1..N_21`.
    pub fn coefficients(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (1..=self.design.len()).map(|i| self.dist.draw(i, rng)).collect()
    }

    /// `Σ_i coeffs[i] ν_i` on the grid.
    pub fn combine(&self, coeffs: &[f64]) -> Vec<f64> {
        let g = self.design[0].len();
        let mut out = vec![0.0; g];
        for (row, c) in self.design.iter().zip(coeffs) {
            for (o, v) in out.iter_mut().zip(row) {
                *o += c * v;
            }
        }
        out
    }

    pub fn draw(&self, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let coeffs = self.coefficients(rng);
        self.combine(&coeffs)
    }
}

fn spline_rows(
    count: usize,
    grid: &Grid,
    dist: CoeffDist,
    rng: &mut ChaCha8Rng,
) -> Vec<Vec<f64>> {
    let errors = SplineErrors::new(grid, dist);
    (0..count).map(|_| errors.draw(rng)).collect()
}

pub fn gen_bspline_errors(
    count: usize,
    grid: &Grid,
    seed: u64,
    dist: CoeffDist,
) -> Result<CurveSample> {
    let rows = spline_rows(count, grid, dist, &mut rng_for(seed, 0));
    CurveSample::from_row_major(grid.clone(), rows.concat())
}

fn fma_rows(
    count: usize,
    kappa1: f64,
    kappa2: f64,
    grid: &Grid,
    dist: CoeffDist,
    rng: &mut ChaCha8Rng,
) -> Vec<f64> {
    // ε_{-1}, ε_0, ε_1, …, ε_count
    let eps = spline_rows(count + 2, grid, dist, rng);
    let mut data = Vec::with_capacity(count * grid.len());
    for i in 2..count + 2 {
        data.extend(
            eps[i]
                .iter()
                .zip(&eps[i - 1])
                .zip(&eps[i - 2])
                .map(|((e0, e1), e2)| e0 + kappa1 * e1 + kappa2 * e2),
        );
    }
    data
}

/// `X_i = ε_i + κ₁ ε_{i−1} + κ₂ ε_{i−2}` with independent start values
/// `ε_{−1}, ε_0`.
pub fn gen_fma(
    count: usize,
    kappa1: f64,
    kappa2: f64,
    grid: &Grid,
    seed: u64,
    dist: CoeffDist,
) -> Result<CurveSample> {
    let data = fma_rows(count, kappa1, kappa2, grid, dist, &mut rng_for(seed, 0));
    CurveSample::from_row_major(grid.clone(), data)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Far1Setting {
    /// `σ_i = 1` for `i ≤ 8`, else 0; `σ_ε = 1.5`.
    #[default]
    S1,
    /// `σ_i = 3^{−i}`; `σ_ε = 0.3`.
    S2,
    /// `σ_i = 1/i`; `σ_ε = 1`.
    S3,
}

impl Far1Setting {
    pub fn sigma(self, i: usize) -> f64 {
        match self {
            Far1Setting::S1 => {
                if i <= 8 {
                    1.0
                } else {
                    0.0
                }
            }
            Far1Setting::S2 => 3f64.powi(-(i as i32)),
            Far1Setting::S3 => 1.0 / i as f64,
        }
    }

    pub fn sigma_change(self) -> f64 {
        match self {
            Far1Setting::S1 => 1.5,
            Far1Setting::S2 => 0.3,
            Far1Setting::S3 => 1.0,
        }
    }
}

/// `Ψ v` for the tridiagonal operator with 0.4 on the diagonal and 0.1 off it.
pub fn far1_operator(v: &[f64]) -> Vec<f64> {
    let d = v.len();
    (0..d)
        .map(|i| {
            let mut acc = 0.4 * v[i];
            if i > 0 {
                acc += 0.1 * v[i - 1];
            }
            if i + 1 < d {
                acc += 0.1 * v[i + 1];
            }
            acc
        })
        .collect()
}

/// Coefficient vectors of an fAR(1) series after `burn_in` discarded steps.
///
/// For `j > ⌊n/2⌋` (1-based) and `m_changed > 0`, independent
/// `N(0, σ_ε²/m_changed)` noise is added to the first `m_changed`
/// coefficients of the observation.
pub fn far1_coefficients(
    n: usize,
    setting: Far1Setting,
    m_changed: usize,
    seed: u64,
    burn_in: usize,
) -> Result<Vec<Vec<f64>>> {
    if n < 2 {
        return Err(invalid("fAR(1) series needs at least 2 observations"));
    }
    if ![0, 2, 6, 25].contains(&m_changed) {
        return Err(invalid(format!(
            "changed directions must be one of 0, 2, 6, 25; got {m_changed}"
        )));
    }
    let mut rng = rng_for(seed, 0);
    let sigmas: Vec<f64> = (1..=FAR1_DIM).map(|i| setting.sigma(i)).collect();
    let noise_sd = if m_changed > 0 {
        setting.sigma_change() / (m_changed as f64).sqrt()
    } else {
        0.0
    };
    let mut state = vec![0.0; FAR1_DIM];
    let mut out = Vec::with_capacity(n);
    for step in 0..burn_in + n {
        let mut next = far1_operator(&state);
        for (x, s) in next.iter_mut().zip(&sigmas) {
            *x += s * rng.sample::<f64, _>(StandardNormal);
        }
        state = next;
        if step >= burn_in {
            let j = step - burn_in + 1;
            let mut obs = state.clone();
            if m_changed > 0 && j > n / 2 {
                for x in obs.iter_mut().take(m_changed) {
                    *x += noise_sd * rng.sample::<f64, _>(StandardNormal);
                }
            }
            out.push(obs);
        }
    }
    Ok(out)
}

/// fAR(1) curves in the 55-function Fourier basis, evaluated on `grid`.
pub fn gen_far1(
    n: usize,
    setting: Far1Setting,
    m_changed: usize,
    grid: &Grid,
    seed: u64,
) -> Result<CurveSample> {
    let coeffs = far1_coefficients(n, setting, m_changed, seed, FAR1_BURN_IN)?;
    let design = fourier_design(FAR1_DIM, grid.points());
    let g = grid.len();
    let mut data = vec![0.0; n * g];
    for (curve, c) in data.chunks_exact_mut(g).zip(&coeffs) {
        for (row, w) in design.iter().zip(c) {
            if *w != 0.0 {
                for (x, v) in curve.iter_mut().zip(row) {
                    *x += w * v;
                }
            }
        }
    }
    CurveSample::from_row_major(grid.clone(), data)
}

/// Brownian paths; observations `i ≥ k_star` (1-based) are multiplied by
/// `1 + d₁ + d₂(1 + sin(2πt))`.
pub fn gen_brownian_cp(
    n: usize,
    k_star: usize,
    d1: f64,
    d2: f64,
    grid: &Grid,
    seed: u64,
) -> Result<CurveSample> {
    if k_star < 1 || k_star > n {
        return Err(invalid(format!("change index {k_star} must lie in [1, {n}]")));
    }
    let mut rng = rng_for(seed, 0);
    let pts = grid.points();
    let sd: Vec<f64> = pts.windows(2).map(|w| (w[1] - w[0]).sqrt()).collect();
    let factor: Vec<f64> = pts
        .iter()
        .map(|&t| 1.0 + d1 + d2 * (1.0 + (2.0 * PI * t).sin()))
        .collect();
    let g = pts.len();
    let mut data = vec![0.0; n * g];
    for (i, curve) in data.chunks_exact_mut(g).enumerate() {
        for k in 1..g {
            curve[k] = curve[k - 1] + sd[k - 1] * rng.sample::<f64, _>(StandardNormal);
        }
        if i + 1 >= k_star {
            curve.iter_mut().zip(&factor).for_each(|(x, f)| *x *= f);
        }
    }
    CurveSample::from_row_major(grid.clone(), data)
}

/// Multiplies curves `j > ⌊s* n⌋` (1-based) by `a`.
pub fn inject_scale_change(sample: &CurveSample, a: f64, s_star: f64) -> Result<CurveSample> {
    if !(s_star > 0.0 && s_star < 1.0) {
        return Err(invalid(format!("change location must lie in (0, 1), got {s_star}")));
    }
    let split = (s_star * sample.len() as f64 + 1e-9).floor() as usize;
    Ok(sample.map_curves(|j, c| {
        if j + 1 > split {
            c.iter_mut().for_each(|x| *x *= a);
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SincosT5,
    Fiid,
    NongaussT5,
    Fma,
    Far1,
    BrownianCp,
}

/// Declarative description of one simulation design.
///
/// Two-sample designs draw `m` and `n` curves and scale the second sample by
/// `a` (by `c` for [`Family::SincosT5`]); change-point designs draw a series
/// of `n` curves and, for the spline families, scale curves after `⌊s* n⌋`
/// by `a`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioSpec {
    pub family: Family,
    pub m: usize,
    pub n: usize,
    pub grid: usize,
    pub c: f64,
    pub a: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub coeff_dist: Option<CoeffDist>,
    pub setting: Far1Setting,
    pub m_changed: usize,
    pub d1: f64,
    pub d2: f64,
    pub k_star: Option<usize>,
    pub s_star: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            family: Family::Fiid,
            m: 100,
            n: 100,
            grid: 101,
            c: 1.0,
            a: 1.0,
            kappa1: 0.0,
            kappa2: 0.0,
            coeff_dist: None,
            setting: Far1Setting::S1,
            m_changed: 0,
            d1: 0.0,
            d2: 0.0,
            k_star: None,
            s_star: 0.5,
        }
    }
}

/// Population quantities known in closed form.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationFacts {
    pub sup_norm_distance: Option<f64>,
    pub extremal_plus: Option<String>,
    pub extremal_minus: Option<String>,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if self.grid < 2 {
            return Err(Error::Config("grid needs at least 2 points".into()));
        }
        if self.n < 2 {
            return Err(Error::Config("n must be at least 2".into()));
        }
        match self.family {
            Family::SincosT5 | Family::Fiid | Family::NongaussT5 | Family::Fma => {
                if self.m < 2 {
                    return Err(Error::Config("m must be at least 2".into()));
                }
            }
            Family::Far1 => {
                if ![0, 2, 6, 25].contains(&self.m_changed) {
                    return Err(Error::Config(format!(
                        "m_changed must be one of 0, 2, 6, 25; got {}",
                        self.m_changed
                    )));
                }
            }
            Family::BrownianCp => {
                let k = self.change_index();
                if k < 1 || k > self.n {
                    return Err(Error::Config(format!(
                        "k_star {k} must lie in [1, {}]",
                        self.n
                    )));
                }
            }
        }
        if !(self.s_star > 0.0 && self.s_star < 1.0) {
            return Err(Error::Config(format!(
                "s_star must lie in (0, 1), got {}",
                self.s_star
            )));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::uniform(self.grid)
    }

    fn change_index(&self) -> usize {
        self.k_star
            .unwrap_or((self.s_star * self.n as f64 + 1e-9).floor() as usize + 1)
    }

    fn spline_params(&self) -> (f64, f64, CoeffDist) {
        match self.family {
            Family::Fiid => (0.0, 0.0, CoeffDist::Gaussian),
            Family::NongaussT5 => (0.0, 0.0, CoeffDist::T5Scaled),
            _ => (
                self.kappa1,
                self.kappa2,
                self.coeff_dist.unwrap_or(CoeffDist::Gaussian),
            ),
        }
    }

    /// Two independent samples `(X, Y)`.
    pub fn two_samples(&self, seed: u64) -> Result<(CurveSample, CurveSample)> {
        self.validate()?;
        let grid = self.grid()?;
        match self.family {
            Family::SincosT5 => gen_sincos_t5(self.m, self.n, self.c, &grid, seed),
            Family::Fiid | Family::NongaussT5 | Family::Fma => {
                let (k1, k2, dist) = self.spline_params();
                let x = fma_rows(self.m, k1, k2, &grid, dist, &mut rng_for(seed, 0));
                let mut y = fma_rows(self.n, k1, k2, &grid, dist, &mut rng_for(seed, 1));
                y.iter_mut().for_each(|v| *v *= self.a);
                Ok((
                    CurveSample::from_row_major(grid.clone(), x)?,
                    CurveSample::from_row_major(grid, y)?,
                ))
            }
            Family::Far1 | Family::BrownianCp => Err(Error::Config(format!(
                "family {:?} is a change-point design",
                self.family
            ))),
        }
    }

    /// One series of `n` curves.
    pub fn series(&self, seed: u64) -> Result<CurveSample> {
        self.validate()?;
        let grid = self.grid()?;
        match self.family {
            Family::Fiid | Family::NongaussT5 | Family::Fma => {
                let (k1, k2, dist) = self.spline_params();
                let base = gen_fma(self.n, k1, k2, &grid, seed, dist)?;
                if self.a == 1.0 {
                    Ok(base)
                } else {
                    inject_scale_change(&base, self.a, self.s_star)
                }
            }
            Family::Far1 => gen_far1(self.n, self.setting, self.m_changed, &grid, seed),
            Family::BrownianCp => gen_brownian_cp(
                self.n,
                self.change_index(),
                self.d1,
                self.d2,
                &grid,
                seed,
            ),
            Family::SincosT5 => Err(Error::Config(
                "family SincosT5 is a two-sample design".into(),
            )),
        }
    }

    pub fn population_facts(&self) -> PopulationFacts {
        let spread = match self.family {
            Family::Fiid | Family::NongaussT5 => Some(1.0),
            Family::Fma => Some(1.0 + self.kappa1.powi(2) + self.kappa2.powi(2)),
            _ => None,
        };
        let Some(level) = spread else {
            return PopulationFacts {
                sup_norm_distance: None,
                extremal_plus: None,
                extremal_minus: None,
            };
        };
        let gap = 1.0 - self.a * self.a;
        // C₁ − C₂ = (1 − a²) C₁, maximal in modulus at (0, 0)
        let (plus, minus) = if gap > 0.0 {
            (Some("(0,0)".to_string()), Some("{}".to_string()))
        } else if gap < 0.0 {
            (Some("{}".to_string()), Some("(0,0)".to_string()))
        } else {
            (None, None)
        };
        PopulationFacts {
            sup_norm_distance: Some(gap.abs() * level),
            extremal_plus: plus,
            extremal_minus: minus,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fda::{empirical_covariance, Divisor};

    #[test]
    fn sincos_with_zero_factor_is_zero() {
        let grid = Grid::uniform(11).unwrap();
        let (x, y) = gen_sincos_t5(5, 4, 0.0, &grid, 1).unwrap();
        assert!(y.as_row_major().iter().all(|&v| v == 0.0));
        assert!(x.as_row_major().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn generators_are_reproducible() {
        let grid = Grid::uniform(21).unwrap();
        assert_eq!(
            gen_fma(10, 0.5, 0.3, &grid, 4, CoeffDist::T5Scaled).unwrap(),
            gen_fma(10, 0.5, 0.3, &grid, 4, CoeffDist::T5Scaled).unwrap()
        );
        assert_ne!(
            gen_fma(10, 0.5, 0.3, &grid, 4, CoeffDist::Gaussian).unwrap(),
            gen_fma(10, 0.5, 0.3, &grid, 5, CoeffDist::Gaussian).unwrap()
        );
        let spec = ScenarioSpec {
            family: Family::Far1,
            n: 20,
            m_changed: 2,
            ..Default::default()
        };
        assert_eq!(spec.series(9).unwrap(), spec.series(9).unwrap());
    }

    #[test]
    fn zero_coefficients_give_zero_curve() {
        let grid = Grid::uniform(11).unwrap();
        let e = SplineErrors::new(&grid, CoeffDist::Gaussian);
        assert!(e.combine(&[0.0; 21]).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn first_coefficient_has_unit_variance() {
        // t₅ has a finite fourth but no eighth moment, so its sample variance
        // converges slowly
        for (dist, tol) in [(CoeffDist::Gaussian, 0.02), (CoeffDist::T5Scaled, 0.05)] {
            let mut rng = rng_for(11, 0);
            let n = 400_000;
            let draws: Vec<f64> = (0..n).map(|_| dist.draw(1, &mut rng)).collect();
            let mean = draws.iter().sum::<f64>() / n as f64;
            let var = draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            assert!((var - 1.0).abs() < tol, "{dist:?}: {var}");
        }
    }

    #[test]
    fn spline_covariance_peaks_at_origin() {
        let grid = Grid::uniform(21).unwrap();
        let s = gen_bspline_errors(20_000, &grid, 3, CoeffDist::Gaussian).unwrap();
        let cov = empirical_covariance(&s, Divisor::NMinus1);
        let (v, at) = cov.sup_norm();
        assert_eq!(at, (0, 0));
        assert!((v - 1.0).abs() < 0.05, "{v}");
    }

    #[test]
    fn fma_variance_at_zero() {
        let grid = Grid::uniform(3).unwrap();
        let (k1, k2) = (0.5, 0.3);
        let s = gen_fma(100_000, k1, k2, &grid, 8, CoeffDist::Gaussian).unwrap();
        let n = s.len() as f64;
        let mean = s.curves().map(|c| c[0]).sum::<f64>() / n;
        let var = s.curves().map(|c| (c[0] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let expected = 1.0 + k1 * k1 + k2 * k2;
        assert!((var / expected - 1.0).abs() < 0.03, "{var} vs {expected}");
    }

    #[test]
    fn fiid_lag_one_autocovariance_vanishes() {
        let grid = Grid::uniform(11).unwrap();
        let s = gen_fma(20_000, 0.0, 0.0, &grid, 2, CoeffDist::Gaussian).unwrap();
        let sup: Vec<f64> = s.curves().map(|c| c.iter().fold(0.0f64, |m, v| m.max(v.abs()))).collect();
        let n = sup.len() as f64;
        let mean = sup.iter().sum::<f64>() / n;
        let var = sup.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let lag1 = sup.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / n;
        assert!((lag1 / var).abs() < 4.0 / n.sqrt(), "{}", lag1 / var);
    }

    #[test]
    fn far1_operator_kills_zero_state() {
        assert!(far1_operator(&[0.0; FAR1_DIM]).iter().all(|&v| v == 0.0));
        assert_eq!(far1_operator(&[1.0, 0.0, 0.0]), vec![0.4, 0.1, 0.0]);
    }

    #[test]
    fn far1_rejects_unknown_change_dimension() {
        let grid = Grid::uniform(11).unwrap();
        assert!(gen_far1(20, Far1Setting::S1, 3, &grid, 1).is_err());
    }

    #[test]
    fn far1_first_coefficient_matches_lyapunov_variance() {
        // Σ = Ψ Σ Ψᵀ + diag(σ²) by fixed-point iteration
        let setting = Far1Setting::S3;
        let d = FAR1_DIM;
        let mut sigma = vec![vec![0.0; d]; d];
        for _ in 0..200 {
            let rows: Vec<Vec<f64>> = sigma.iter().map(|r| far1_operator(r)).collect();
            let cols: Vec<Vec<f64>> = (0..d)
                .map(|j| far1_operator(&rows.iter().map(|r| r[j]).collect::<Vec<_>>()))
                .collect();
            for i in 0..d {
                for j in 0..d {
                    sigma[i][j] = cols[j][i] + if i == j { setting.sigma(i + 1).powi(2) } else { 0.0 };
                }
            }
        }
        let coeffs = far1_coefficients(10_000, setting, 0, 12, FAR1_BURN_IN).unwrap();
        let n = coeffs.len() as f64;
        let mean = coeffs.iter().map(|c| c[0]).sum::<f64>() / n;
        let var = coeffs.iter().map(|c| (c[0] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var / sigma[0][0] - 1.0).abs() < 0.05, "{var} vs {}", sigma[0][0]);
    }

    #[test]
    fn brownian_paths_start_at_zero_with_unit_terminal_variance() {
        let grid = Grid::uniform(26).unwrap();
        let s = gen_brownian_cp(10_000, 10_000, 0.0, 0.0, &grid, 6).unwrap();
        assert!(s.curves().all(|c| c[0] == 0.0));
        let n = s.len() as f64;
        let var = s.curves().map(|c| c[25] * c[25]).sum::<f64>() / n;
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn brownian_change_scales_later_paths() {
        let grid = Grid::uniform(5).unwrap();
        let base = gen_brownian_cp(6, 6, 0.0, 0.0, &grid, 2).unwrap();
        let changed = gen_brownian_cp(6, 4, 0.4, 0.0, &grid, 2).unwrap();
        for j in 0..6 {
            let f = if j + 1 >= 4 { 1.4 } else { 1.0 };
            for (a, b) in base.curve(j).iter().zip(changed.curve(j)) {
                assert!((a * f - b).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn scale_change_identity_and_split() {
        let grid = Grid::uniform(3).unwrap();
        let s = gen_fma(10, 0.0, 0.0, &grid, 1, CoeffDist::Gaussian).unwrap();
        assert_eq!(inject_scale_change(&s, 1.0, 0.5).unwrap(), s);
        let t = inject_scale_change(&s, 2.0, 0.5).unwrap();
        assert_eq!(t.curve(4), s.curve(4));
        assert_eq!(t.curve(5)[1], 2.0 * s.curve(5)[1]);
        assert!(inject_scale_change(&s, 2.0, 1.0).is_err());
    }

    #[test]
    fn population_facts() {
        let spec = ScenarioSpec {
            family: Family::Fma,
            kappa1: 0.7,
            a: 2f64.sqrt(),
            ..Default::default()
        };
        let f = spec.population_facts();
        assert!((f.sup_norm_distance.unwrap() - 1.49).abs() < 1e-12);
        assert_eq!(f.extremal_minus.as_deref(), Some("(0,0)"));
        let spec = ScenarioSpec {
            family: Family::Fiid,
            a: 2.0,
            ..Default::default()
        };
        assert!((spec.population_facts().sup_norm_distance.unwrap() - 3.0).abs() < 1e-12);
        let spec = ScenarioSpec {
            family: Family::BrownianCp,
            ..Default::default()
        };
        assert_eq!(spec.population_facts().sup_norm_distance, None);
    }

    #[test]
    fn mode_mismatch_is_a_config_error() {
        let spec = ScenarioSpec {
            family: Family::SincosT5,
            ..Default::default()
        };
        assert!(spec.series(1).is_err());
        let spec = ScenarioSpec {
            family: Family::BrownianCp,
            ..Default::default()
        };
        assert!(spec.two_samples(1).is_err());
    }
}
