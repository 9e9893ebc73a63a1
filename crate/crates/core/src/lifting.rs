//! Structured low-rank lifting of k-space and singular value thresholding.
//!
//! For a shot image `I = P ⊙ m` with real `m`, the identity
//! `P conj(I) = conj(P) I` becomes, in k-space, a convolution relation
//! that is linear in the spectrum `Q` of `conj(P)`:
//!
//! ```text
//! sum_p  Q(p) K(k - p) - conj(Q(p) K(-k - p)) = 0      for every k
//! ```
//!
//! Splitting real and imaginary parts gives one real equation pair per
//! output coordinate `k`. The lifted matrix stores those equations as
//! columns (`2 N_R` rows by `2 |V|` columns), so `[Re Q; Im Q]` is a left
//! null vector whenever the phase spectrum lies inside the support.
//!
//! Column `e` (real part) holds `K^r+ - K^r-` over `-(K^i+ - K^i-)`;
//! column `|V| + e` (imaginary part) holds `K^i+ + K^i-` over
//! `K^r+ + K^r-`, where `K^±(e, f) = K(±k_e - p_f)`.

use std::sync::Arc;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::CenteredFft;
use crate::grid::{check_shape, ComplexGrid, Domain};

/// Disk-shaped set of integer k-space offsets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SupportRegion {
    radius: usize,
    points: Vec<(i64, i64)>,
}

impl SupportRegion {
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn points(&self) -> &[(i64, i64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn contains(&self, p: (i64, i64)) -> bool {
        self.points.binary_search(&p).is_ok()
    }
}

/// All `(p, q)` with `p² + q² <= R²`, in lexicographic order.
pub fn support_points(radius: usize) -> SupportRegion {
    let r = radius as i64;
    let mut points = Vec::new();
    for p in -r..=r {
        for q in -r..=r {
            if p * p + q * q <= r * r {
                points.push((p, q));
            }
        }
    }
    SupportRegion { radius, points }
}

/// Index tables shared by every lift of a given grid shape and support.
#[derive(Debug)]
pub struct LiftLayout {
    rows: usize,
    cols: usize,
    support: SupportRegion,
    valid: Vec<(i64, i64)>,
    /// grid index of `k_e - p_f`, laid out `e * N_R + f`
    plus: Vec<u32>,
    /// grid index of `-k_e - p_f`
    minus: Vec<u32>,
    /// number of matrix entries reading each grid value (per real component)
    counts: Vec<u32>,
    uncovered: Vec<u32>,
}

impl LiftLayout {
    pub fn new(rows: usize, cols: usize, support: &SupportRegion) -> Result<Self> {
        let (hn, hm) = ((rows / 2) as i64, (cols / 2) as i64);
        let row_range = (-hn, rows as i64 - 1 - hn);
        let col_range = (-hm, cols as i64 - 1 - hm);
        let on_grid = |(x, y): (i64, i64)| {
            x >= row_range.0 && x <= row_range.1 && y >= col_range.0 && y <= col_range.1
        };
        let index = |(x, y): (i64, i64)| ((x + hn) as usize * cols + (y + hm) as usize) as u32;

        let mut valid = Vec::new();
        for x in row_range.0..=row_range.1 {
            for y in col_range.0..=col_range.1 {
                let ok = support
                    .points
                    .iter()
                    .all(|&(p, q)| on_grid((x - p, y - q)) && on_grid((-x - p, -y - q)));
                if ok {
                    valid.push((x, y));
                }
            }
        }
        if valid.is_empty() {
            return Err(Error::GridTooSmall {
                rows,
                cols,
                radius: support.radius,
            });
        }

        let nr = support.len();
        let mut plus = Vec::with_capacity(valid.len() * nr);
        let mut minus = Vec::with_capacity(valid.len() * nr);
        let mut counts = vec![0u32; rows * cols];
        for &(x, y) in &valid {
            for &(p, q) in &support.points {
                let ip = index((x - p, y - q));
                let im = index((-x - p, -y - q));
                plus.push(ip);
                minus.push(im);
                counts[ip as usize] += 2;
                counts[im as usize] += 2;
            }
        }
        let uncovered = counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(i, _)| i as u32)
            .collect();
        Ok(Self {
            rows,
            cols,
            support: support.clone(),
            valid,
            plus,
            minus,
            counts,
            uncovered,
        })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn support(&self) -> &SupportRegion {
        &self.support
    }

    /// Centered coordinates of the valid output set `V`.
    pub fn valid_coords(&self) -> &[(i64, i64)] {
        &self.valid
    }

    /// `(2 N_R, 2 |V|)`.
    pub fn matrix_shape(&self) -> (usize, usize) {
        (2 * self.support.len(), 2 * self.valid.len())
    }

    /// Multiplicity of each grid entry, row-major.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Grid indices no matrix entry reads.
    pub fn uncovered(&self) -> &[u32] {
        &self.uncovered
    }

    pub fn lift(self: &Arc<Self>, kspace: &ComplexGrid) -> Result<LiftedMatrix> {
        check_shape(self.shape(), kspace.shape())?;
        let (nrows, ncols) = self.matrix_shape();
        let mut data = DMatrix::<f64>::zeros(nrows, ncols);
        self.fill(kspace.as_slice(), data.as_mut_slice(), nrows, 0);
        let passthrough = self.uncovered.iter().map(|&i| kspace.as_slice()[i as usize]).collect();
        Ok(LiftedMatrix {
            layout: Arc::clone(self),
            data,
            passthrough,
        })
    }

    /// Writes the lift of `k` into rows `row0..row0 + 2 N_R` of a
    /// column-major buffer with leading dimension `ld`.
    fn fill(&self, k: &[Complex64], buf: &mut [f64], ld: usize, row0: usize) {
        let nr = self.support.len();
        let nv = self.valid.len();
        for e in 0..nv {
            let base = e * nr;
            let re_col = &mut buf[e * ld + row0..e * ld + row0 + 2 * nr];
            for f in 0..nr {
                let kp = k[self.plus[base + f] as usize];
                let km = k[self.minus[base + f] as usize];
                re_col[f] = kp.re - km.re;
                re_col[nr + f] = km.im - kp.im;
            }
            let off = (nv + e) * ld + row0;
            let im_col = &mut buf[off..off + 2 * nr];
            for f in 0..nr {
                let kp = k[self.plus[base + f] as usize];
                let km = k[self.minus[base + f] as usize];
                im_col[f] = kp.im + km.im;
                im_col[nr + f] = kp.re + km.re;
            }
        }
    }

    /// Plain adjoint of the lift (no multiplicity division, uncovered
    /// entries zero).
    pub fn adjoint(&self, data: &DMatrix<f64>) -> Result<ComplexGrid> {
        let (nrows, ncols) = self.matrix_shape();
        if data.shape() != (nrows, ncols) {
            return Err(Error::InconsistentLift(format!(
                "matrix is {:?}, layout expects {:?}",
                data.shape(),
                (nrows, ncols)
            )));
        }
        Ok(self.adjoint_rows(data.as_slice(), nrows, 0))
    }

    /// Adjoint applied to rows `row0..row0 + 2 N_R` of a column-major
    /// buffer with leading dimension `ld`.
    fn adjoint_rows(&self, buf: &[f64], ld: usize, row0: usize) -> ComplexGrid {
        let nr = self.support.len();
        let nv = self.valid.len();
        let mut out = vec![Complex64::default(); self.rows * self.cols];
        for e in 0..nv {
            let base = e * nr;
            let re_col = &buf[e * ld + row0..e * ld + row0 + 2 * nr];
            let off = (nv + e) * ld + row0;
            let im_col = &buf[off..off + 2 * nr];
            for f in 0..nr {
                let ip = self.plus[base + f] as usize;
                let imn = self.minus[base + f] as usize;
                let d_re = re_col[f];
                let d_im = re_col[nr + f];
                let s_im = im_col[f];
                let s_re = im_col[nr + f];
                out[ip] += Complex64::new(d_re + s_re, s_im - d_im);
                out[imn] += Complex64::new(s_re - d_re, s_im + d_im);
            }
        }
        let mut grid = ComplexGrid::zeros(self.rows, self.cols, Domain::Kspace);
        grid.as_mut_slice().copy_from_slice(&out);
        grid
    }

    /// Multiplicity division plus carried entries, completing [`unlift`].
    fn finish_unlift(&self, grid: &mut ComplexGrid, carried: impl Iterator<Item = Complex64>) {
        for (z, &c) in grid.as_mut_slice().iter_mut().zip(&self.counts) {
            if c > 0 {
                *z /= c as f64;
            }
        }
        for (&i, v) in self.uncovered.iter().zip(carried) {
            grid.as_mut_slice()[i as usize] = v;
        }
    }
}

/// Lifted real matrix plus the descriptor needed to map it back.
///
/// Grid entries that no matrix cell reads are carried alongside so that
/// [`unlift`] returns them unchanged.
#[derive(Clone, Debug)]
pub struct LiftedMatrix {
    layout: Arc<LiftLayout>,
    data: DMatrix<f64>,
    passthrough: Vec<Complex64>,
}

impl LiftedMatrix {
    pub fn layout(&self) -> &Arc<LiftLayout> {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.data
    }

    /// Replaces the matrix, keeping descriptor and carried entries.
    pub fn with_matrix(mut self, data: DMatrix<f64>) -> Result<Self> {
        if data.shape() != self.data.shape() {
            return Err(Error::InconsistentLift(format!(
                "replacement is {:?}, expected {:?}",
                data.shape(),
                self.data.shape()
            )));
        }
        self.data = data;
        Ok(self)
    }

    /// Zero matrix with zero carried entries.
    pub fn zeros(layout: &Arc<LiftLayout>) -> Self {
        let (r, c) = layout.matrix_shape();
        Self {
            layout: Arc::clone(layout),
            data: DMatrix::zeros(r, c),
            passthrough: vec![Complex64::default(); layout.uncovered.len()],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        self.data.shape()
    }
}

/// Lifts a centered k-space grid with a fresh layout.
pub fn lift(kspace: &ComplexGrid, support: &SupportRegion) -> Result<LiftedMatrix> {
    let layout = Arc::new(LiftLayout::new(kspace.rows(), kspace.cols(), support)?);
    layout.lift(kspace)
}

/// Adjoint of the lift divided by entry multiplicity, so that
/// `unlift(lift(x)) == x`.
pub fn unlift(lifted: &LiftedMatrix) -> Result<ComplexGrid> {
    let layout = &lifted.layout;
    if lifted.passthrough.len() != layout.uncovered.len() {
        return Err(Error::InconsistentLift("carried entry count".into()));
    }
    let mut grid = layout.adjoint(&lifted.data)?;
    layout.finish_unlift(&mut grid, lifted.passthrough.iter().copied());
    Ok(grid)
}

/// Keeps the first `eps_keep` singular values and soft-thresholds the
/// rest by `sigma`.
///
/// The decomposition is taken through the Gram matrix of the short side,
/// so the cost is linear in the long dimension.
pub fn svt(matrix: &DMatrix<f64>, eps_keep: usize, sigma: f64) -> Result<DMatrix<f64>> {
    svt_scaled(matrix, eps_keep, sigma, ThresholdScale::Absolute)
}

/// How the lifted matrices of several shots are thresholded.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LiftingMode {
    /// One SVT on the row-wise stack of all shots (`2 N_R J` rows).
    #[default]
    Joint,
    /// One SVT per shot (`2 N_R` rows each).
    PerShot,
}

/// How the SVT threshold `σ` is measured.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ThresholdScale {
    /// `σ` is subtracted as is.
    Absolute,
    /// `σ` is a fraction of the largest thresholded singular value
    /// `s_{ε+1}`; `σ >= 1` is a hard rank-`ε` truncation.
    #[default]
    Relative,
}

/// [`svt`] with a choice of threshold scale.
pub fn svt_scaled(matrix: &DMatrix<f64>, eps_keep: usize, sigma: f64, scale: ThresholdScale) -> Result<DMatrix<f64>> {
    if !(sigma >= 0.0) {
        return Err(Error::InvalidParameter(format!("threshold must be >= 0, got {sigma}")));
    }
    let (r, c) = matrix.shape();
    let small = r.min(c);
    if sigma == 0.0 || eps_keep >= small {
        return Ok(matrix.clone());
    }
    let wide = r <= c;
    let gram = if wide {
        matrix * matrix.transpose()
    } else {
        matrix.transpose() * matrix
    };
    let eig = SymmetricEigen::try_new(gram, f64::EPSILON, 0).ok_or(Error::SvdFailure)?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::SvdFailure);
    }
    let mut order: Vec<usize> = (0..small).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let value = |i: usize| eig.eigenvalues[i].max(0.0).sqrt();
    let tau = match scale {
        ThresholdScale::Absolute => sigma,
        ThresholdScale::Relative => sigma * value(order[eps_keep]),
    };

    let mut shrink = vec![1.0f64; small];
    for &i in &order[eps_keep..] {
        let s = value(i);
        shrink[i] = if s > tau { (s - tau) / s } else { 0.0 };
    }
    let u = &eig.eigenvectors;
    let mut scaled = u.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= shrink[j];
    }
    let filter = scaled * u.transpose();
    Ok(if wide { filter * matrix } else { matrix * filter })
}

/// Singular values in descending order (direct SVD, for diagnostics).
pub fn singular_values(matrix: &DMatrix<f64>) -> Vec<f64> {
    let tall = if matrix.nrows() >= matrix.ncols() {
        matrix.clone()
    } else {
        matrix.transpose()
    };
    let mut s: Vec<f64> = tall.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// `F* unlift(SVT(lift(F x)))` with a cached layout and transform.
#[derive(Debug, Clone)]
pub struct LowRankProjector {
    layout: Arc<LiftLayout>,
    fft: CenteredFft,
    eps_keep: usize,
    sigma: f64,
    scale: ThresholdScale,
}

impl LowRankProjector {
    pub fn new(rows: usize, cols: usize, radius: usize, eps_keep: usize, sigma: f64) -> Result<Self> {
        if !(sigma >= 0.0) {
            return Err(Error::InvalidParameter(format!("threshold must be >= 0, got {sigma}")));
        }
        let layout = Arc::new(LiftLayout::new(rows, cols, &support_points(radius))?);
        Ok(Self {
            layout,
            fft: CenteredFft::new(rows, cols),
            eps_keep,
            sigma,
            scale: ThresholdScale::Absolute,
        })
    }

    pub fn with_scale(mut self, scale: ThresholdScale) -> Self {
        self.scale = scale;
        self
    }

    pub fn layout(&self) -> &Arc<LiftLayout> {
        &self.layout
    }

    pub fn project(&self, image: &ComplexGrid) -> Result<ComplexGrid> {
        check_shape(self.layout.shape(), image.shape())?;
        let k = self.fft.forward(image);
        let lifted = self.layout.lift(&k)?;
        let thresholded = svt_scaled(lifted.matrix(), self.eps_keep, self.sigma, self.scale)?;
        let k = unlift(&lifted.with_matrix(thresholded)?)?;
        Ok(self.fft.inverse(&k))
    }

    /// Projects every shot image with the given lifting mode.
    pub fn project_shots(&self, images: &[ComplexGrid], mode: LiftingMode) -> Result<Vec<ComplexGrid>> {
        match mode {
            LiftingMode::Joint => self.project_joint(images),
            LiftingMode::PerShot => images.par_iter().map(|img| self.project(img)).collect(),
        }
    }

    /// Thresholds the row-wise stack of all shots' lifted matrices
    /// (`2 N_R J` rows) and maps each block back to its shot.
    pub fn project_joint(&self, images: &[ComplexGrid]) -> Result<Vec<ComplexGrid>> {
        let (nr2, ncols) = self.layout.matrix_shape();
        let ld = nr2 * images.len();
        let mut stacked = DMatrix::<f64>::zeros(ld, ncols);
        let mut kspaces = Vec::with_capacity(images.len());
        for (j, img) in images.iter().enumerate() {
            check_shape(self.layout.shape(), img.shape())?;
            let k = self.fft.forward(img);
            self.layout.fill(k.as_slice(), stacked.as_mut_slice(), ld, j * nr2);
            kspaces.push(k);
        }
        let thresholded = svt_scaled(&stacked, self.eps_keep, self.sigma, self.scale)?;
        Ok(kspaces
            .iter()
            .enumerate()
            .map(|(j, k)| {
                let mut grid = self.layout.adjoint_rows(thresholded.as_slice(), ld, j * nr2);
                let carried = self.layout.uncovered.iter().map(|&i| k.as_slice()[i as usize]);
                self.layout.finish_unlift(&mut grid, carried);
                self.fft.inverse(&grid)
            })
            .collect())
    }
}

/// One-shot convenience form of [`LowRankProjector::project`].
pub fn lowrank_project(
    image: &ComplexGrid,
    support: &SupportRegion,
    eps_keep: usize,
    sigma: f64,
) -> Result<ComplexGrid> {
    let (n, m) = image.shape();
    LowRankProjector::new(n, m, support.radius(), eps_keep, sigma)?.project(image)
}
