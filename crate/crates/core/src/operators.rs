//! The encoding chain `U F C_h P_j` and its adjoint.
//!
//! Undersampling is mask multiplication on the full centered grid, so
//! `U* U` is the same mask and non-acquired samples are exact zeros.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::CenteredFft;
use crate::grid::{check_shape, ComplexGrid, Domain, RealImage};

/// Threshold below which a complex magnitude is treated as zero when
/// extracting a phase.
pub const ZERO_MAGNITUDE: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MaskKind {
    FullInterleave,
    UniformUndersampled,
    PartialFourier,
}

/// Binary k-space sampling pattern of one shot.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplingMask {
    rows: usize,
    cols: usize,
    kind: MaskKind,
    data: Vec<bool>,
}

impl SamplingMask {
    pub fn from_vec(rows: usize, cols: usize, kind: MaskKind, data: Vec<bool>) -> Result<Self> {
        if rows == 0 || cols == 0 || data.len() != rows * cols {
            return Err(Error::InvalidMask(format!(
                "{} entries do not fill a {rows}x{cols} mask",
                data.len()
            )));
        }
        let mask = Self {
            rows,
            cols,
            kind,
            data,
        };
        if mask.pe_lines().is_empty() {
            return Err(Error::InvalidMask("mask samples no phase-encode line".into()));
        }
        Ok(mask)
    }

    /// Mask sampling whole phase-encode lines (columns).
    pub fn from_lines(rows: usize, cols: usize, kind: MaskKind, lines: &[usize]) -> Result<Self> {
        let mut data = vec![false; rows * cols];
        for &c in lines {
            if c >= cols {
                return Err(Error::InvalidMask(format!("line {c} outside {cols} columns")));
            }
            for r in 0..rows {
                data[r * cols + c] = true;
            }
        }
        Self::from_vec(rows, cols, kind, data)
    }

    pub fn full(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            kind: MaskKind::FullInterleave,
            data: vec![true; rows * cols],
        }
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

    pub fn kind(&self) -> MaskKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: MaskKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.data
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.data[r * self.cols + c]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Fraction of sampled grid points.
    pub fn fill_fraction(&self) -> f64 {
        self.count() as f64 / self.data.len() as f64
    }

    /// Phase-encode lines (columns) with at least one sampled point.
    pub fn pe_lines(&self) -> Vec<usize> {
        (0..self.cols)
            .filter(|&c| (0..self.rows).any(|r| self.data[r * self.cols + c]))
            .collect()
    }

    /// Zeroes every non-sampled entry in place.
    pub fn apply(&self, grid: &mut ComplexGrid) {
        for (z, &keep) in grid.as_mut_slice().iter_mut().zip(&self.data) {
            if !keep {
                *z = Complex64::new(0.0, 0.0);
            }
        }
    }
}

/// Unit-modulus phase map per shot.
#[derive(Clone, Debug, PartialEq)]
pub struct ShotPhaseSet {
    phases: Vec<ComplexGrid>,
}

impl ShotPhaseSet {
    /// Normalizes every entry to unit modulus; entries with magnitude
    /// below [`ZERO_MAGNITUDE`] become 1.
    pub fn from_images(images: &[ComplexGrid]) -> Result<Self> {
        let first = images.first().ok_or_else(|| {
            Error::InvalidParameter("phase set needs at least one shot".into())
        })?;
        let shape = first.shape();
        let mut phases = Vec::with_capacity(images.len());
        for img in images {
            check_shape(shape, img.shape())?;
            let mut p = img.clone().with_domain(Domain::Image);
            for z in p.as_mut_slice() {
                *z = unit_phase(*z);
            }
            phases.push(p);
        }
        Ok(Self { phases })
    }

    /// Phases `exp(i * sign * angle_j)` from angle maps in radians.
    pub fn from_angles(angles: &[RealImage], sign: f64) -> Result<Self> {
        let grids: Vec<ComplexGrid> = angles.iter().map(|a| a.to_phasor(sign)).collect();
        Self::from_images(&grids)
    }

    pub fn constant(shots: usize, rows: usize, cols: usize) -> Self {
        let one = ComplexGrid::from_fn(rows, cols, Domain::Image, |_, _| Complex64::new(1.0, 0.0));
        Self {
            phases: vec![one; shots],
        }
    }

    pub fn shots(&self) -> usize {
        self.phases.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.phases[0].shape()
    }

    pub fn get(&self, j: usize) -> &ComplexGrid {
        &self.phases[j]
    }

    pub fn iter(&self) -> impl Iterator<Item = &ComplexGrid> {
        self.phases.iter()
    }

    pub fn angles(&self) -> Vec<RealImage> {
        self.phases
            .iter()
            .map(|p| {
                let (n, m) = p.shape();
                RealImage::from_fn(n, m, |r, c| p.get(r, c).arg())
            })
            .collect()
    }
}

/// `z / |z|`, or 1 when `|z|` is numerically zero.
pub fn unit_phase(z: Complex64) -> Complex64 {
    let mag = z.norm();
    if mag < ZERO_MAGNITUDE || !mag.is_finite() {
        Complex64::new(1.0, 0.0)
    } else {
        z / mag
    }
}

/// `mask ⊙ F(C_h ⊙ x)` for a complex image `x` (no shape checks).
pub fn encode_image(fft: &CenteredFft, x: &ComplexGrid, coil: &ComplexGrid, mask: &SamplingMask) -> ComplexGrid {
    let mut img = x.clone();
    for (z, c) in img.as_mut_slice().iter_mut().zip(coil.as_slice()) {
        *z *= c;
    }
    let mut k = fft.forward(&img);
    mask.apply(&mut k);
    k
}

/// `conj(C_h) ⊙ F*(mask ⊙ y)`, the adjoint of [`encode_image`].
pub fn decode_kspace(fft: &CenteredFft, y: &ComplexGrid, coil: &ComplexGrid, mask: &SamplingMask) -> ComplexGrid {
    let mut masked = y.clone();
    mask.apply(&mut masked);
    let mut img = fft.inverse(&masked);
    for (z, c) in img.as_mut_slice().iter_mut().zip(coil.as_slice()) {
        *z *= c.conj();
    }
    img
}

/// `mask ⊙ F(C_h ⊙ P_j ⊙ m)` using a prepared transform.
pub fn forward_with(
    fft: &CenteredFft,
    m: &RealImage,
    phase: &ComplexGrid,
    coil: &ComplexGrid,
    mask: &SamplingMask,
) -> Result<ComplexGrid> {
    let shape = fft.shape();
    check_shape(shape, m.shape())?;
    check_shape(shape, phase.shape())?;
    check_shape(shape, coil.shape())?;
    check_shape(shape, mask.shape())?;
    let img = ComplexGrid::from_fn(shape.0, shape.1, Domain::Image, |r, c| {
        coil.get(r, c) * phase.get(r, c) * m.get(r, c)
    });
    let mut k = fft.forward(&img);
    mask.apply(&mut k);
    Ok(k)
}

/// Adjoint of [`forward_with`] with respect to a complex image input.
pub fn adjoint_with(
    fft: &CenteredFft,
    y: &ComplexGrid,
    phase: &ComplexGrid,
    coil: &ComplexGrid,
    mask: &SamplingMask,
) -> Result<ComplexGrid> {
    let shape = fft.shape();
    check_shape(shape, y.shape())?;
    check_shape(shape, phase.shape())?;
    check_shape(shape, coil.shape())?;
    check_shape(shape, mask.shape())?;
    let mut masked = y.clone();
    mask.apply(&mut masked);
    let mut img = fft.inverse(&masked);
    for ((z, p), c) in img
        .as_mut_slice()
        .iter_mut()
        .zip(phase.as_slice())
        .zip(coil.as_slice())
    {
        *z *= p.conj() * c.conj();
    }
    Ok(img)
}

/// `U F (C_h ⊙ P_j ⊙ m)` for a real magnitude image.
pub fn apply_forward(
    m: &RealImage,
    phase: &ComplexGrid,
    coil: &ComplexGrid,
    mask: &SamplingMask,
) -> Result<ComplexGrid> {
    forward_with(&CenteredFft::new(m.rows(), m.cols()), m, phase, coil, mask)
}

/// `P_j* C_h* F* U* y`, the exact adjoint of [`apply_forward`] on complex images.
pub fn apply_adjoint(
    y: &ComplexGrid,
    phase: &ComplexGrid,
    coil: &ComplexGrid,
    mask: &SamplingMask,
) -> Result<ComplexGrid> {
    adjoint_with(&CenteredFft::new(y.rows(), y.cols()), y, phase, coil, mask)
}

/// `sum_h conj(C_h) ⊙ G_h`, summed in channel order.
pub fn coil_combine(channel_images: &[ComplexGrid], coils: &[ComplexGrid]) -> Result<ComplexGrid> {
    if channel_images.len() != coils.len() {
        return Err(Error::CountMismatch {
            what: "channel images",
            expected: coils.len(),
            found: channel_images.len(),
        });
    }
    let first = coils.first().ok_or_else(|| {
        Error::InvalidParameter("coil combination needs at least one channel".into())
    })?;
    let (n, m) = first.shape();
    let mut out = ComplexGrid::zeros(n, m, Domain::Image);
    for (g, c) in channel_images.iter().zip(coils) {
        check_shape((n, m), g.shape())?;
        check_shape((n, m), c.shape())?;
        for ((o, gv), cv) in out.as_mut_slice().iter_mut().zip(g.as_slice()).zip(c.as_slice()) {
            *o += cv.conj() * gv;
        }
    }
    Ok(out)
}
