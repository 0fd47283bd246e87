//! Grid-based curves and surfaces.
//!
//! A [`CurveSample`] stores `n` curves observed on a common [`Grid`] of `G`
//! points in `[0, 1]`; a [`Surface`] is a `G × G` row-major matrix holding a
//! function on the squared grid (covariance estimates, bootstrap fields).
//! Suprema over `[0, 1]²` are maxima over the stored grid.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Ordered evaluation points `0 = t_0 < t_1 < … < t_{G-1} = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Grid {
    points: Vec<f64>,
}

impl Grid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(invalid(format!(
                "grid needs at least 2 points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|t| !t.is_finite()) {
            return Err(invalid("grid contains a non-finite point"));
        }
        if points[0] != 0.0 || points[points.len() - 1] != 1.0 {
            return Err(invalid(format!(
                "grid must start at 0 and end at 1, got [{}, {}]",
                points[0],
                points[points.len() - 1]
            )));
        }
        if let Some(i) = points.windows(2).position(|w| w[1] <= w[0]) {
            return Err(invalid(format!(
                "grid is not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self { points })
    }

    /// `size` equidistant points `i / (size - 1)`.
    pub fn uniform(size: usize) -> Result<Self> {
        if size < 2 {
            return Err(invalid(format!("grid needs at least 2 points, got {size}")));
        }
        let last = (size - 1) as f64;
        let mut points: Vec<f64> = (0..size).map(|i| i as f64 / last).collect();
        points[size - 1] = 1.0;
        Self::new(points)
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

impl TryFrom<Vec<f64>> for Grid {
    type Error = Error;

    fn try_from(points: Vec<f64>) -> Result<Self> {
        Self::new(points)
    }
}

impl From<Grid> for Vec<f64> {
    fn from(grid: Grid) -> Self {
        grid.points
    }
}

/// One functional observation, aligned with a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct Curve(pub Vec<f64>);

impl Curve {
    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// A time-ordered collection of curves on a shared grid, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSample {
    grid: Grid,
    data: Vec<f64>,
    n: usize,
}

impl CurveSample {
    pub fn from_curves(grid: Grid, curves: Vec<Curve>) -> Result<Self> {
        let g = grid.len();
        let mut data = Vec::with_capacity(curves.len() * g);
        for (j, curve) in curves.iter().enumerate() {
            if curve.len() != g {
                return Err(invalid(format!(
                    "curve {j} has {} values, grid has {g}",
                    curve.len()
                )));
            }
            data.extend_from_slice(curve.values());
        }
        Self::from_row_major(grid, data)
    }

    /// Builds a sample from `n × G` row-major values.
    pub fn from_row_major(grid: Grid, data: Vec<f64>) -> Result<Self> {
        let g = grid.len();
        if data.len() % g != 0 {
            return Err(invalid(format!(
                "{} values do not split into curves of length {g}",
                data.len()
            )));
        }
        let n = data.len() / g;
        if n < 2 {
            return Err(invalid(format!("sample needs at least 2 curves, got {n}")));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!(
                "non-finite value in curve {} at grid index {}",
                pos / g,
                pos % g
            )));
        }
        Ok(Self { grid, data, n })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Number of curves.
    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn grid_len(&self) -> usize {
        self.grid.len()
    }

    pub fn curve(&self, j: usize) -> &[f64] {
        let g = self.grid.len();
        &self.data[j * g..(j + 1) * g]
    }

    pub fn curves(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.grid.len())
    }

    pub fn as_row_major(&self) -> &[f64] {
        &self.data
    }

    pub fn to_curves(&self) -> Vec<Curve> {
        self.curves().map(|c| Curve(c.to_vec())).collect()
    }

    /// Pointwise sample mean.
    pub fn mean_curve(&self) -> Vec<f64> {
        let g = self.grid.len();
        let mut mean = vec![0.0; g];
        for c in self.curves() {
            for (m, v) in mean.iter_mut().zip(c) {
                *m += v;
            }
        }
        let inv = 1.0 / self.n as f64;
        mean.iter_mut().for_each(|m| *m *= inv);
        mean
    }

    /// Multiplies every value by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            grid: self.grid.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
            n: self.n,
        }
    }

    /// Curves in reverse time order.
    pub fn reversed(&self) -> Self {
        let g = self.grid.len();
        let mut data = Vec::with_capacity(self.data.len());
        for j in (0..self.n).rev() {
            data.extend_from_slice(&self.data[j * g..(j + 1) * g]);
        }
        Self {
            grid: self.grid.clone(),
            data,
            n: self.n,
        }
    }

    pub(crate) fn map_curves(&self, mut f: impl FnMut(usize, &mut [f64])) -> Self {
        let mut data = self.data.clone();
        for (j, c) in data.chunks_exact_mut(self.grid.len()).enumerate() {
            f(j, c);
        }
        Self {
            grid: self.grid.clone(),
            data,
            n: self.n,
        }
    }

    pub(crate) fn ensure_same_grid(&self, other: &CurveSample) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch(format!(
                "samples live on different grids ({} vs {} points)",
                self.grid.len(),
                other.grid.len()
            )));
        }
        Ok(())
    }
}

/// Row/column index pair `(i, k)` addressing `(t_i, t_k)`.
pub type GridPair = (usize, usize);

/// A real function on the squared grid, `values[i * G + k] = f(t_i, t_k)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Surface {
    dim: usize,
    values: Vec<f64>,
}

impl Surface {
    pub fn zeros(dim: usize) -> Self {
        Self {
            dim,
            values: vec![0.0; dim * dim],
        }
    }

    pub fn from_values(dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != dim * dim {
            return Err(invalid(format!(
                "surface of dimension {dim} needs {} values, got {}",
                dim * dim,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(invalid("surface contains a non-finite value"));
        }
        Ok(Self { dim, values })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn get(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.dim + k]
    }

    pub fn set(&mut self, i: usize, k: usize, v: f64) {
        self.values[i * self.dim + k] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn scale(&mut self, factor: f64) {
        self.values.iter_mut().for_each(|v| *v *= factor);
    }

    /// `self += factor * other`.
    pub fn add_scaled(&mut self, factor: f64, other: &Surface) {
        debug_assert_eq!(self.dim, other.dim);
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += factor * b;
        }
    }

    pub fn sub(&self, other: &Surface) -> Surface {
        debug_assert_eq!(self.dim, other.dim);
        Surface {
            dim: self.dim,
            values: self
                .values
                .iter()
                .zip(&other.values)
                .map(|(a, b)| a - b)
                .collect(),
        }
    }

    /// Maximum of `|f|` over the grid and its first row-major location.
    pub fn sup_norm(&self) -> (f64, GridPair) {
        let mut best = 0.0;
        let mut at = 0;
        for (idx, v) in self.values.iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                at = idx;
            }
        }
        (best, (at / self.dim, at % self.dim))
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.get(i, i)).sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.dim).all(|i| (0..i).all(|k| (self.get(i, k) - self.get(k, i)).abs() <= tol))
    }

    /// Positive semi-definiteness up to `1e-10 · trace`: the Cholesky
    /// factorisation of `self + 1e-10 · trace · I` must succeed.
    pub fn is_psd(&self) -> bool {
        let g = self.dim;
        let shift = PSD_TOLERANCE * self.trace().abs().max(f64::MIN_POSITIVE);
        let mut l = vec![0.0; g * g];
        for i in 0..g {
            for k in 0..=i {
                let dot: f64 = (0..k).map(|j| l[i * g + j] * l[k * g + j]).sum();
                let a = 0.5 * (self.get(i, k) + self.get(k, i));
                if i == k {
                    let pivot = a + shift - dot;
                    if pivot < 0.0 {
                        return false;
                    }
                    l[i * g + i] = pivot.sqrt();
                } else {
                    let d = l[k * g + k];
                    l[i * g + k] = if d > 0.0 { (a - dot) / d } else { 0.0 };
                }
            }
        }
        true
    }
}

/// Relative eigenvalue slack accepted by [`Surface::is_psd`].
pub const PSD_TOLERANCE: f64 = 1e-10;

/// Subtracts the pointwise sample mean from every curve.
pub fn center_sample(sample: &CurveSample) -> CurveSample {
    let mean = sample.mean_curve();
    sample.map_curves(|_, c| {
        for (v, m) in c.iter_mut().zip(&mean) {
            *v -= m;
        }
    })
}

/// Normalisation of the summed outer products.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Divisor {
    N,
    NMinus1,
}

impl Divisor {
    pub fn value(self, n: usize) -> f64 {
        match self {
            Divisor::N => n as f64,
            Divisor::NMinus1 => (n - 1) as f64,
        }
    }
}

/// `(1/d) Σ_j X̃_j ⊗ X̃_j` with `X̃_j` the centred curves.
pub fn empirical_covariance(sample: &CurveSample, divisor: Divisor) -> Surface {
    let centred = center_sample(sample);
    let g = sample.grid_len();
    let mut acc = PackedSym::zeros(g);
    for c in centred.curves() {
        acc.add_outer(1.0, c);
    }
    let mut out = acc.to_surface();
    out.scale(1.0 / divisor.value(sample.len()));
    out
}

/// `max |a - b|` over the grid together with its first row-major argmax.
pub fn sup_norm_diff(a: &Surface, b: &Surface) -> Result<(f64, GridPair)> {
    if a.dim != b.dim {
        return Err(invalid(format!(
            "surfaces live on different grids ({} vs {} points)",
            a.dim, b.dim
        )));
    }
    let mut best = 0.0;
    let mut at = 0;
    for (idx, (x, y)) in a.values.iter().zip(&b.values).enumerate() {
        let d = (x - y).abs();
        if d > best {
            best = d;
            at = idx;
        }
    }
    Ok((best, (at / a.dim, at % a.dim)))
}

/// Rank-one surface `(s, t) ↦ x(s) x(t)`.
pub fn outer_square(curve: &[f64]) -> Surface {
    let g = curve.len();
    let mut values = Vec::with_capacity(g * g);
    for &a in curve {
        values.extend(curve.iter().map(|&b| a * b));
    }
    Surface { dim: g, values }
}

/// Symmetric `G × G` matrix stored as its upper triangle, row by row.
///
/// Row `i` holds columns `i..G` starting at offset `i*G - i*(i-1)/2`.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct PackedSym {
    dim: usize,
    pub(crate) data: Vec<f64>,
}

impl PackedSym {
    pub(crate) fn zeros(dim: usize) -> Self {
        Self {
            dim,
            data: vec![0.0; dim * (dim + 1) / 2],
        }
    }

    pub(crate) fn dim(&self) -> usize {
        self.dim
    }

    /// Start of row `i`: `Σ_{r<i} (dim - r)`.
    #[inline]
    pub(crate) fn offset(dim: usize, i: usize) -> usize {
        i * dim - i * i.saturating_sub(1) / 2
    }

    #[inline]
    pub(crate) fn index(&self, i: usize, k: usize) -> usize {
        let (i, k) = if i <= k { (i, k) } else { (k, i) };
        Self::offset(self.dim, i) + (k - i)
    }

    pub(crate) fn get(&self, i: usize, k: usize) -> f64 {
        self.data[self.index(i, k)]
    }

    /// `self += w · x xᵀ`.
    #[inline]
    pub(crate) fn add_outer(&mut self, w: f64, x: &[f64]) {
        let g = self.dim;
        debug_assert_eq!(x.len(), g);
        let mut off = 0;
        for i in 0..g {
            let a = w * x[i];
            let row = &mut self.data[off..off + (g - i)];
            for (r, b) in row.iter_mut().zip(&x[i..]) {
                *r += a * b;
            }
            off += g - i;
        }
    }

    pub(crate) fn add_scaled(&mut self, w: f64, other: &PackedSym) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += w * b;
        }
    }

    pub(crate) fn to_surface(&self) -> Surface {
        let g = self.dim;
        let mut s = Surface::zeros(g);
        let mut off = 0;
        for i in 0..g {
            for k in i..g {
                let v = self.data[off + k - i];
                s.values[i * g + k] = v;
                s.values[k * g + i] = v;
            }
            off += g - i;
        }
        s
    }

    #[cfg(test)]
    pub(crate) fn from_surface(s: &Surface) -> Self {
        let g = s.dim;
        let mut p = Self::zeros(g);
        let mut off = 0;
        for i in 0..g {
            p.data[off..off + g - i].copy_from_slice(&s.values[i * g + i..(i + 1) * g]);
            off += g - i;
        }
        p
    }

    pub(crate) fn sup_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(rows: &[&[f64]]) -> CurveSample {
        let g = rows[0].len();
        let grid = Grid::uniform(g).unwrap();
        CurveSample::from_curves(grid, rows.iter().map(|r| Curve(r.to_vec())).collect()).unwrap()
    }

    #[test]
    fn grid_rejects_bad_points() {
        assert!(Grid::new(vec![0.0]).is_err());
        assert!(Grid::new(vec![0.1, 1.0]).is_err());
        assert!(Grid::new(vec![0.0, 0.9]).is_err());
        assert!(Grid::new(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(Grid::new(vec![0.0, f64::NAN, 1.0]).is_err());
        let g = Grid::uniform(101).unwrap();
        assert_eq!(g.points()[100], 1.0);
        assert_eq!(g.points()[50], 0.5);
    }

    #[test]
    fn sample_requires_two_curves_and_finite_values() {
        let grid = Grid::uniform(2).unwrap();
        assert!(CurveSample::from_curves(grid.clone(), vec![Curve(vec![0.0, 1.0])]).is_err());
        assert!(CurveSample::from_curves(
            grid.clone(),
            vec![Curve(vec![0.0, 1.0]), Curve(vec![f64::INFINITY, 1.0])]
        )
        .is_err());
        assert!(
            CurveSample::from_curves(grid, vec![Curve(vec![0.0, 1.0]), Curve(vec![1.0])]).is_err()
        );
    }

    #[test]
    fn centering_constant_sample_gives_zeros() {
        let s = sample(&[&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]]);
        assert!(center_sample(&s).as_row_major().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn centering_two_points() {
        let s = sample(&[&[0.0, 0.0], &[2.0, 2.0]]);
        assert_eq!(center_sample(&s).as_row_major(), &[-1.0, -1.0, 1.0, 1.0]);
    }

    #[test]
    fn covariance_of_two_points() {
        let s = sample(&[&[0.0, 0.0], &[2.0, 2.0]]);
        let c = empirical_covariance(&s, Divisor::NMinus1);
        assert_eq!(c.values(), &[2.0, 2.0, 2.0, 2.0]);
        let c = empirical_covariance(&s, Divisor::N);
        assert_eq!(c.values(), &[1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn covariance_of_constant_sample_is_zero() {
        let s = sample(&[&[4.0, -1.0], &[4.0, -1.0], &[4.0, -1.0]]);
        let c = empirical_covariance(&s, Divisor::NMinus1);
        assert!(c.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn outer_square_small() {
        let s = outer_square(&[1.0, 2.0]);
        assert_eq!(s.values(), &[1.0, 2.0, 2.0, 4.0]);
        assert!(outer_square(&[0.0, 0.0, 0.0]).values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn psd_check() {
        assert!(outer_square(&[1.0, 2.0, -1.0]).is_psd());
        assert!(Surface::zeros(3).is_psd());
        let indefinite = Surface::from_values(2, vec![1.0, 2.0, 2.0, 1.0]).unwrap();
        assert!(!indefinite.is_psd());
    }

    #[test]
    fn sup_norm_diff_identity_and_mismatch() {
        let a = outer_square(&[1.0, -3.0, 0.5]);
        assert_eq!(sup_norm_diff(&a, &a).unwrap().0, 0.0);
        let b = Surface::zeros(2);
        assert!(sup_norm_diff(&a, &b).is_err());
        let (v, at) = sup_norm_diff(&a, &Surface::zeros(3)).unwrap();
        assert_eq!(v, 9.0);
        assert_eq!(at, (1, 1));
    }

    #[test]
    fn sup_norm_diff_reports_first_argmax() {
        let a = Surface::from_values(2, vec![1.0, -2.0, 2.0, 0.0]).unwrap();
        let (v, at) = sup_norm_diff(&a, &Surface::zeros(2)).unwrap();
        assert_eq!(v, 2.0);
        assert_eq!(at, (0, 1));
    }

    #[test]
    fn packed_round_trip_and_indexing() {
        let x = [1.0, 2.0, -1.0, 0.5];
        let mut p = PackedSym::zeros(4);
        p.add_outer(2.0, &x);
        let s = p.to_surface();
        for i in 0..4 {
            for k in 0..4 {
                assert_eq!(s.get(i, k), 2.0 * x[i] * x[k]);
                assert_eq!(p.get(i, k), s.get(i, k));
            }
        }
        assert_eq!(PackedSym::from_surface(&s), p);
    }
}
