//! Dense 2-D grids used for images, k-space, coil maps and phases.
//!
//! Storage is row-major. Rows run along readout (N), columns along
//! phase encode (M). K-space grids use centered indexing: the DC sample
//! sits at `(rows / 2, cols / 2)`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Which domain a complex grid lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Image,
    Kspace,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComplexGrid {
    rows: usize,
    cols: usize,
    domain: Domain,
    data: Vec<Complex64>,
}

impl ComplexGrid {
    pub fn zeros(rows: usize, cols: usize, domain: Domain) -> Self {
        assert!(rows >= 1 && cols >= 1, "grid dimensions must be positive");
        Self {
            rows,
            cols,
            domain,
            data: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    /// Builds a grid from row-major values, rejecting empty shapes and
    /// non-finite entries.
    pub fn from_vec(rows: usize, cols: usize, domain: Domain, data: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(format!("empty grid {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::CountMismatch {
                what: "grid values",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite("grid values"));
        }
        Ok(Self {
            rows,
            cols,
            domain,
            data,
        })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        domain: Domain,
        mut f: impl FnMut(usize, usize) -> Complex64,
    ) -> Self {
        let mut grid = Self::zeros(rows, cols, domain);
        for r in 0..rows {
            for c in 0..cols {
                grid.data[r * cols + c] = f(r, c);
            }
        }
        grid
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn with_domain(mut self, domain: Domain) -> Self {
        self.domain = domain;
        self
    }

    pub fn set_domain(&mut self, domain: Domain) {
        self.domain = domain;
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: Complex64) {
        self.data[r * self.cols + c] = v;
    }

    /// Index of the DC sample for centered k-space.
    pub fn center(&self) -> (usize, usize) {
        (self.rows / 2, self.cols / 2)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self, other>` with the conjugate on `self`.
    pub fn inner(&self, other: &ComplexGrid) -> Complex64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn magnitude(&self) -> RealImage {
        RealImage {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.norm()).collect(),
        }
    }

    pub fn real_part(&self) -> RealImage {
        RealImage {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.re).collect(),
        }
    }

    pub fn ensure_shape(&self, shape: (usize, usize)) -> Result<()> {
        check_shape(shape, self.shape())
    }
}

/// Real-valued image (magnitudes, phases in radians, weights).
#[derive(Clone, Debug, PartialEq)]
pub struct RealImage {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealImage {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::filled(rows, cols, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        assert!(rows >= 1 && cols >= 1, "image dimensions must be positive");
        Self {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidParameter(format!("empty image {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::CountMismatch {
                what: "image values",
                expected: rows * cols,
                found: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("image values"));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut img = Self::zeros(rows, cols);
        for r in 0..rows {
            for c in 0..cols {
                img.data[r * cols + c] = f(r, c);
            }
        }
        img
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn norm_sqr(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum()
    }

    pub fn scaled(&self, factor: f64) -> RealImage {
        RealImage {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> RealImage {
        RealImage {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Complex image with zero imaginary part.
    pub fn to_complex(&self) -> ComplexGrid {
        ComplexGrid {
            rows: self.rows,
            cols: self.cols,
            domain: Domain::Image,
            data: self.data.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        }
    }

    /// Unit-modulus grid `exp(i * sign * self)`.
    pub fn to_phasor(&self, sign: f64) -> ComplexGrid {
        ComplexGrid {
            rows: self.rows,
            cols: self.cols,
            domain: Domain::Image,
            data: self
                .data
                .iter()
                .map(|&v| Complex64::from_polar(1.0, sign * v))
                .collect(),
        }
    }

    pub fn ensure_shape(&self, shape: (usize, usize)) -> Result<()> {
        check_shape(shape, self.shape())
    }
}

pub(crate) fn check_shape(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
    if expected != found {
        Err(Error::ShapeMismatch { expected, found })
    } else {
        Ok(())
    }
}

/// `sum |a - b|^2` over two equally shaped real images.
pub fn diff_norm_sqr(a: &RealImage, b: &RealImage) -> f64 {
    a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_non_finite_values() {
        let data = vec![Complex64::new(f64::NAN, 0.0); 4];
        assert!(matches!(
            ComplexGrid::from_vec(2, 2, Domain::Image, data),
            Err(Error::NonFinite(_))
        ));
        assert!(RealImage::from_vec(1, 2, vec![1.0, f64::INFINITY]).is_err());
    }

    #[test]
    fn rejects_empty_and_short_buffers() {
        assert!(RealImage::from_vec(0, 3, vec![]).is_err());
        assert!(ComplexGrid::from_vec(2, 2, Domain::Kspace, vec![Complex64::default(); 3]).is_err());
    }

    #[test]
    fn center_is_floor_half() {
        assert_eq!(ComplexGrid::zeros(7, 8, Domain::Kspace).center(), (3, 4));
    }
}
