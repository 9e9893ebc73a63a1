//! Edge-weighted isotropic total variation on a real magnitude image.
//!
//! Differences are backward along rows (`m(x, y) - m(x - 1, y)`, weighted
//! by `W⊥`) and along columns (`m(x, y) - m(x, y - 1)`, weighted by `W∥`),
//! with zero difference on the first row and column.

use crate::error::{Error, Result};
use crate::grid::{check_shape, RealImage};

pub const DEFAULT_DELTA: f64 = 0.01;
pub const DEFAULT_SMOOTHING: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeWeights {
    vertical: RealImage,
    horizontal: RealImage,
    delta: f64,
    smoothing: f64,
}

impl EdgeWeights {
    /// All-ones weights, i.e. plain isotropic TV.
    pub fn unit(rows: usize, cols: usize) -> Self {
        Self {
            vertical: RealImage::filled(rows, cols, 1.0),
            horizontal: RealImage::filled(rows, cols, 1.0),
            delta: f64::INFINITY,
            smoothing: DEFAULT_SMOOTHING,
        }
    }

    pub fn from_parts(vertical: RealImage, horizontal: RealImage, delta: f64) -> Result<Self> {
        check_shape(vertical.shape(), horizontal.shape())?;
        let bad = |img: &RealImage| img.as_slice().iter().any(|&w| !(w > 0.0 && w <= 1.0));
        if bad(&vertical) || bad(&horizontal) {
            return Err(Error::InvalidParameter("edge weights must lie in (0, 1]".into()));
        }
        Ok(Self {
            vertical,
            horizontal,
            delta,
            smoothing: DEFAULT_SMOOTHING,
        })
    }

    /// Sets the per-pixel smoothing `ε_tv` (0 gives the exact norm).
    pub fn with_smoothing(mut self, smoothing: f64) -> Result<Self> {
        if !(smoothing >= 0.0 && smoothing.is_finite()) {
            return Err(Error::InvalidParameter(format!("smoothing must be >= 0, got {smoothing}")));
        }
        self.smoothing = smoothing;
        Ok(self)
    }

    /// `W⊥`, weighting row differences.
    pub fn vertical(&self) -> &RealImage {
        &self.vertical
    }

    /// `W∥`, weighting column differences.
    pub fn horizontal(&self) -> &RealImage {
        &self.horizontal
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn smoothing(&self) -> f64 {
        self.smoothing
    }

    pub fn shape(&self) -> (usize, usize) {
        self.vertical.shape()
    }
}

/// Weights `exp(-d² / δ)` from backward differences of `m0` rescaled to
/// peak 1.
pub fn compute_weights(m0: &RealImage, delta: f64) -> Result<EdgeWeights> {
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!("delta must be > 0, got {delta}")));
    }
    let peak = m0.as_slice().iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    let scale = if peak > 0.0 { 1.0 / peak } else { 1.0 };
    let (n, m) = m0.shape();
    let weight = |d: f64| {
        let d = d * scale;
        // floor keeps the weights strictly positive for extreme contrasts
        (-d * d / delta).exp().max(f64::MIN_POSITIVE)
    };
    let vertical = RealImage::from_fn(n, m, |r, c| {
        if r == 0 {
            1.0
        } else {
            weight(m0.get(r, c) - m0.get(r - 1, c))
        }
    });
    let horizontal = RealImage::from_fn(n, m, |r, c| {
        if c == 0 {
            1.0
        } else {
            weight(m0.get(r, c) - m0.get(r, c - 1))
        }
    });
    EdgeWeights::from_parts(vertical, horizontal, delta)
}

fn backward_diffs(m: &RealImage, r: usize, c: usize) -> (f64, f64) {
    let v = m.get(r, c);
    let d1 = if r > 0 { v - m.get(r - 1, c) } else { 0.0 };
    let d2 = if c > 0 { v - m.get(r, c - 1) } else { 0.0 };
    (d1, d2)
}

pub fn wtv_value(m: &RealImage, w: &EdgeWeights) -> Result<f64> {
    check_shape(w.shape(), m.shape())?;
    let eps = w.smoothing;
    let (n, cols) = m.shape();
    let mut total = 0.0;
    for r in 0..n {
        for c in 0..cols {
            let (d1, d2) = backward_diffs(m, r, c);
            let s = w.vertical.get(r, c) * d1 * d1 + w.horizontal.get(r, c) * d2 * d2;
            total += (s + eps * eps).sqrt() - eps;
        }
    }
    Ok(total)
}

/// Gradient of the smoothed [`wtv_value`]; zero where a pixel term is
/// exactly flat and unsmoothed.
pub fn wtv_subgradient(m: &RealImage, w: &EdgeWeights) -> Result<RealImage> {
    check_shape(w.shape(), m.shape())?;
    let eps = w.smoothing;
    let (n, cols) = m.shape();
    // per-pixel (W⊥ d1 / V, W∥ d2 / V)
    let mut p1 = vec![0.0f64; n * cols];
    let mut p2 = vec![0.0f64; n * cols];
    for r in 0..n {
        for c in 0..cols {
            let (d1, d2) = backward_diffs(m, r, c);
            let (a, b) = (w.vertical.get(r, c) * d1, w.horizontal.get(r, c) * d2);
            let v = (a * d1 + b * d2 + eps * eps).sqrt();
            if v > 0.0 {
                p1[r * cols + c] = a / v;
                p2[r * cols + c] = b / v;
            }
        }
    }
    Ok(RealImage::from_fn(n, cols, |r, c| {
        let i = r * cols + c;
        let mut g = 0.0;
        if r > 0 {
            g += p1[i];
        }
        if c > 0 {
            g += p2[i];
        }
        if r + 1 < n {
            g -= p1[i + cols];
        }
        if c + 1 < cols {
            g -= p2[i + 1];
        }
        g
    }))
}
