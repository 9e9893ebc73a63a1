//! Image and diffusion-direction quality metrics.

use nalgebra::{DMatrix, DVector, Matrix3, SymmetricEigen};

use crate::error::{Error, Result};
use crate::grid::{check_shape, diff_norm_sqr, RealImage};

/// `10 log10(NM / |test s - ref s|²)` with `s = 1 / max(ref)`.
///
/// Identical images give `+∞`.
pub fn psnr(reference: &RealImage, test: &RealImage) -> Result<f64> {
    check_shape(reference.shape(), test.shape())?;
    let peak = reference.max();
    if !(peak > 0.0) {
        return Err(Error::ZeroData);
    }
    let s = 1.0 / peak;
    let err = diff_norm_sqr(&reference.scaled(s), &test.scaled(s));
    let count = reference.as_slice().len() as f64;
    Ok(if err == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (count / err).log10()
    })
}

/// One diffusion-weighted image with its encoding.
#[derive(Clone, Debug)]
pub struct WeightedImage {
    pub image: RealImage,
    pub b_value: f64,
    pub direction: [f64; 3],
}

/// Symmetric tensors stored as `[Dxx, Dyy, Dzz, Dxy, Dxz, Dyz]`.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorField {
    rows: usize,
    cols: usize,
    tensors: Vec<[f64; 6]>,
    valid: Vec<bool>,
}

impl TensorField {
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn tensors(&self) -> &[[f64; 6]] {
        &self.tensors
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn matrix(&self, idx: usize) -> Matrix3<f64> {
        tensor_matrix(&self.tensors[idx])
    }
}

pub fn tensor_matrix(t: &[f64; 6]) -> Matrix3<f64> {
    Matrix3::new(t[0], t[3], t[4], t[3], t[1], t[5], t[4], t[5], t[2])
}

/// Per-pixel linear least squares on `ln(s / s0) = -b gᵀ D g`.
///
/// Pixels where any signal is non-positive are marked invalid.
pub fn fit_tensor(dwi: &[WeightedImage], b0: &RealImage) -> Result<TensorField> {
    let shape = b0.shape();
    let mut design = DMatrix::<f64>::zeros(dwi.len(), 6);
    for (i, w) in dwi.iter().enumerate() {
        check_shape(shape, w.image.shape())?;
        let g = w.direction;
        let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
        if !(norm > 0.0) || !(w.b_value > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "image {i} needs a nonzero direction and positive b-value"
            )));
        }
        let g = [g[0] / norm, g[1] / norm, g[2] / norm];
        let row = [
            g[0] * g[0],
            g[1] * g[1],
            g[2] * g[2],
            2.0 * g[0] * g[1],
            2.0 * g[0] * g[2],
            2.0 * g[1] * g[2],
        ];
        for (j, v) in row.iter().enumerate() {
            design[(i, j)] = -w.b_value * v;
        }
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.iter().copied().fold(0.0, f64::max);
    let rank = svd
        .singular_values
        .iter()
        .filter(|&&s| s > 1e-10 * smax.max(f64::MIN_POSITIVE))
        .count();
    if rank < 6 {
        return Err(Error::RankDeficient { rank });
    }
    let pinv = svd.pseudo_inverse(1e-12 * smax).map_err(|_| Error::SvdFailure)?;

    let count = shape.0 * shape.1;
    let mut tensors = vec![[0.0; 6]; count];
    let mut valid = vec![false; count];
    let mut y = DVector::<f64>::zeros(dwi.len());
    for idx in 0..count {
        let s0 = b0.as_slice()[idx];
        if !(s0 > 0.0) {
            continue;
        }
        let mut ok = true;
        for (i, w) in dwi.iter().enumerate() {
            let s = w.image.as_slice()[idx];
            if !(s > 0.0) {
                ok = false;
                break;
            }
            y[i] = (s / s0).ln();
        }
        if !ok {
            continue;
        }
        let d = &pinv * &y;
        tensors[idx] = [d[0], d[1], d[2], d[3], d[4], d[5]];
        valid[idx] = true;
    }
    Ok(TensorField {
        rows: shape.0,
        cols: shape.1,
        tensors,
        valid,
    })
}

/// Per-pixel unit principal directions with a validity mask and FA.
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionField {
    rows: usize,
    cols: usize,
    vectors: Vec<[f64; 3]>,
    valid: Vec<bool>,
    fa: Option<Vec<f64>>,
}

impl DirectionField {
    /// Normalizes every valid vector; zero vectors are marked invalid.
    pub fn new(rows: usize, cols: usize, vectors: Vec<[f64; 3]>, valid: Vec<bool>) -> Result<Self> {
        if vectors.len() != rows * cols || valid.len() != rows * cols {
            return Err(Error::CountMismatch {
                what: "direction field entries",
                expected: rows * cols,
                found: vectors.len().min(valid.len()),
            });
        }
        let mut vectors = vectors;
        let mut valid = valid;
        for (v, ok) in vectors.iter_mut().zip(valid.iter_mut()) {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            if *ok && n > 0.0 && n.is_finite() {
                *v = [v[0] / n, v[1] / n, v[2] / n];
            } else {
                *ok = false;
            }
        }
        Ok(Self {
            rows,
            cols,
            vectors,
            valid,
            fa: None,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn vectors(&self) -> &[[f64; 3]] {
        &self.vectors
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn fa(&self) -> Option<&[f64]> {
        self.fa.as_deref()
    }
}

/// Fractional anisotropy of three eigenvalues.
pub fn fractional_anisotropy(ev: [f64; 3]) -> f64 {
    let mean = (ev[0] + ev[1] + ev[2]) / 3.0;
    let num: f64 = ev.iter().map(|l| (l - mean).powi(2)).sum();
    let den: f64 = ev.iter().map(|l| l * l).sum();
    if den > 0.0 {
        (1.5 * num / den).sqrt()
    } else {
        0.0
    }
}

/// Eigenvector of the largest eigenvalue with the first nonzero
/// component made positive, and the eigenvalues.
pub fn principal_eigen(d: &Matrix3<f64>) -> ([f64; 3], [f64; 3]) {
    let eig = SymmetricEigen::new(*d);
    let mut best = 0;
    for i in 1..3 {
        if eig.eigenvalues[i] > eig.eigenvalues[best] {
            best = i;
        }
    }
    let col = eig.eigenvectors.column(best);
    let mut v = [col[0], col[1], col[2]];
    if let Some(&first) = v.iter().find(|x| x.abs() > 1e-12) {
        if first < 0.0 {
            v = [-v[0], -v[1], -v[2]];
        }
    }
    let ev = [eig.eigenvalues[0], eig.eigenvalues[1], eig.eigenvalues[2]];
    (v, ev)
}

pub fn primary_direction(field: &TensorField) -> DirectionField {
    let count = field.rows * field.cols;
    let mut vectors = vec![[0.0; 3]; count];
    let mut fa = vec![0.0; count];
    let mut valid = field.valid.clone();
    for idx in 0..count {
        if !valid[idx] {
            continue;
        }
        let (v, ev) = principal_eigen(&field.matrix(idx));
        if v.iter().any(|x| !x.is_finite()) {
            valid[idx] = false;
            continue;
        }
        vectors[idx] = v;
        fa[idx] = fractional_anisotropy(ev);
    }
    let mut out = DirectionField::new(field.rows, field.cols, vectors, valid)
        .expect("field sizes are consistent by construction");
    out.fa = Some(fa);
    out
}

/// Mean angular error in degrees over jointly valid pixels, treating
/// `v` and `-v` as the same direction.
pub fn aae(reference: &DirectionField, test: &DirectionField) -> Result<f64> {
    check_shape(reference.shape(), test.shape())?;
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..reference.vectors.len() {
        if !(reference.valid[i] && test.valid[i]) {
            continue;
        }
        let (a, b) = (reference.vectors[i], test.vectors[i]);
        let dot = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).abs().min(1.0);
        total += dot.acos().to_degrees();
        count += 1;
    }
    if count == 0 {
        return Err(Error::NoValidPixels);
    }
    Ok(total / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psnr_examples() {
        let a = RealImage::from_vec(2, 2, vec![1.0, 0.5, 0.25, 0.0]).unwrap();
        assert_eq!(psnr(&a, &a).unwrap(), f64::INFINITY);
        let mut b = a.clone();
        b.set(0, 1, 0.7);
        let v = psnr(&a, &b).unwrap();
        assert!((v - 20.0).abs() < 1e-9, "{v}");
        assert!(matches!(psnr(&RealImage::zeros(2, 2), &a), Err(Error::ZeroData)));
    }

    #[test]
    fn direction_examples() {
        let d = Matrix3::from_diagonal(&nalgebra::Vector3::new(2e-3, 1e-3, 1e-3));
        let (v, ev) = principal_eigen(&d);
        assert!((v[0] - 1.0).abs() < 1e-12 && v[1].abs() < 1e-12 && v[2].abs() < 1e-12);
        assert!(fractional_anisotropy(ev) > 0.0);
        assert_eq!(fractional_anisotropy([1e-3; 3]), 0.0);
    }

    #[test]
    fn aae_examples() {
        let x = DirectionField::new(1, 1, vec![[1.0, 0.0, 0.0]], vec![true]).unwrap();
        let y = DirectionField::new(1, 1, vec![[0.0, 1.0, 0.0]], vec![true]).unwrap();
        let d = DirectionField::new(1, 1, vec![[1.0, 1.0, 0.0]], vec![true]).unwrap();
        let flip = DirectionField::new(1, 1, vec![[-1.0, 0.0, 0.0]], vec![true]).unwrap();
        assert_eq!(aae(&x, &x).unwrap(), 0.0);
        assert!((aae(&x, &y).unwrap() - 90.0).abs() < 1e-12);
        assert!((aae(&x, &d).unwrap() - 45.0).abs() < 1e-9);
        assert_eq!(aae(&x, &flip).unwrap(), 0.0);
        let none = DirectionField::new(1, 1, vec![[1.0, 0.0, 0.0]], vec![false]).unwrap();
        assert!(matches!(aae(&x, &none), Err(Error::NoValidPixels)));
    }

    #[test]
    fn five_directions_are_rank_deficient() {
        let b0 = RealImage::filled(2, 2, 1.0);
        let dirs = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 1.0, 0.0], [1.0, 0.0, 1.0]];
        let dwi: Vec<WeightedImage> = dirs
            .iter()
            .map(|&g| WeightedImage {
                image: RealImage::filled(2, 2, 0.5),
                b_value: 1000.0,
                direction: g,
            })
            .collect();
        assert!(matches!(fit_tensor(&dwi, &b0), Err(Error::RankDeficient { rank: 5 })));
    }
}
