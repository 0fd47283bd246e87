//! Basis systems used by the simulation designs.

use std::f64::consts::PI;

/// Clamped B-spline basis with equidistant breakpoints on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BSplineBasis {
    order: usize,
    knots: Vec<f64>,
    size: usize,
}

impl BSplineBasis {
    /// `size` B-splines of the given `order` (4 = cubic); the boundary knots
    /// are repeated `order` times, the `size - order` interior knots are
    /// equidistant.
    pub fn new(size: usize, order: usize) -> Self {
        assert!(order >= 1 && size >= order, "need size >= order >= 1");
        let interior = size - order;
        let mut knots = vec![0.0; order];
        knots.extend((1..=interior).map(|i| i as f64 / (interior + 1) as f64));
        knots.extend(std::iter::repeat_n(1.0, order));
        Self { order, knots, size }
    }

    /// Cubic basis with 21 functions.
    pub fn cubic21() -> Self {
        Self::new(21, 4)
    }

    pub fn len(&self) -> usize {
        self.size
    }

    pub fn is_empty(&self) -> bool {
        self.size == 0
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Values of all basis functions at `t ∈ [0, 1]` (Cox–de Boor).
    pub fn eval(&self, t: f64) -> Vec<f64> {
        let p = self.order - 1;
        let t = t.clamp(0.0, 1.0);
        // span index `i` with knots[i] <= t < knots[i+1]; the right endpoint
        // belongs to the last non-degenerate span
        let mut span = p;
        while span < self.size - 1 && t >= self.knots[span + 1] {
            span += 1;
        }
        let mut n = vec![0.0; p + 1];
        let mut left = vec![0.0; p + 1];
        let mut right = vec![0.0; p + 1];
        n[0] = 1.0;
        for j in 1..=p {
            left[j] = t - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let denom = right[r + 1] + left[j - r];
                let temp = if denom > 0.0 { n[r] / denom } else { 0.0 };
                n[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            n[j] = saved;
        }
        let mut out = vec![0.0; self.size];
        out[span - p..=span].copy_from_slice(&n);
        out
    }

    /// `size × G` matrix of basis values on `points`, row-major by function.
    pub fn design(&self, points: &[f64]) -> Vec<Vec<f64>> {
        let cols: Vec<Vec<f64>> = points.iter().map(|&t| self.eval(t)).collect();
        (0..self.size)
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect()
    }
}

/// Orthonormal Fourier system on `[0, 1]`: `1, √2 sin(2πkt), √2 cos(2πkt), …`.
pub fn fourier_value(index: usize, t: f64) -> f64 {
    if index == 0 {
        return 1.0;
    }
    let freq = index.div_ceil(2) as f64;
    if index % 2 == 1 {
        2f64.sqrt() * (2.0 * PI * freq * t).sin()
    } else {
        2f64.sqrt() * (2.0 * PI * freq * t).cos()
    }
}

/// `size × G` matrix of the first `size` Fourier functions on `points`.
pub fn fourier_design(size: usize, points: &[f64]) -> Vec<Vec<f64>> {
    (0..size)
        .map(|i| points.iter().map(|&t| fourier_value(i, t)).collect())
        .collect()
}
