//! Multi-shot multi-channel acquisitions and coil sensitivity maps.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fft::CenteredFft;
use crate::grid::{check_shape, ComplexGrid, Domain, RealImage};
use crate::operators::{MaskKind, SamplingMask};

/// Acquisition metadata carried in the file header.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcqMeta {
    /// Diffusion weighting in s/mm².
    pub b_value: f64,
    /// Unit gradient direction; `None` for b = 0.
    pub direction: Option<[f64; 3]>,
}

impl Default for AcqMeta {
    fn default() -> Self {
        Self {
            b_value: 0.0,
            direction: None,
        }
    }
}

/// Sampled k-space `Y_hj` for every shot `j` and channel `h`.
#[derive(Clone, Debug, PartialEq)]
pub struct AcquisitionSet {
    rows: usize,
    cols: usize,
    channels: usize,
    shots: usize,
    /// shot-major: index `j * channels + h`
    kspace: Vec<ComplexGrid>,
    masks: Vec<SamplingMask>,
    meta: AcqMeta,
}

impl AcquisitionSet {
    /// Validates shapes and masks, then forces non-acquired entries to zero.
    pub fn new(
        kspace: Vec<ComplexGrid>,
        channels: usize,
        masks: Vec<SamplingMask>,
        meta: AcqMeta,
    ) -> Result<Self> {
        let shots = masks.len();
        if shots == 0 || channels == 0 {
            return Err(Error::InvalidParameter(
                "acquisition needs at least one shot and one channel".into(),
            ));
        }
        if kspace.len() != shots * channels {
            return Err(Error::CountMismatch {
                what: "k-space grids (shots x channels)",
                expected: shots * channels,
                found: kspace.len(),
            });
        }
        let (rows, cols) = masks[0].shape();
        for m in &masks {
            check_shape((rows, cols), m.shape())?;
        }
        validate_masks(&masks)?;
        if let Some(d) = meta.direction {
            let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
            if (norm - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidParameter(format!(
                    "direction must be a unit vector, norm is {norm}"
                )));
            }
        }
        if !(meta.b_value >= 0.0 && meta.b_value.is_finite()) {
            return Err(Error::InvalidParameter(format!("invalid b-value {}", meta.b_value)));
        }
        let mut kspace = kspace;
        for (i, k) in kspace.iter_mut().enumerate() {
            check_shape((rows, cols), k.shape())?;
            if !k.is_finite() {
                return Err(Error::NonFinite("acquisition k-space"));
            }
            k.set_domain(Domain::Kspace);
            masks[i / channels].apply(k);
        }
        Ok(Self {
            rows,
            cols,
            channels,
            shots,
            kspace,
            masks,
            meta,
        })
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

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shots(&self) -> usize {
        self.shots
    }

    pub fn kspace(&self, shot: usize, channel: usize) -> &ComplexGrid {
        &self.kspace[shot * self.channels + channel]
    }

    pub fn all_kspace(&self) -> &[ComplexGrid] {
        &self.kspace
    }

    pub fn masks(&self) -> &[SamplingMask] {
        &self.masks
    }

    pub fn mask(&self, shot: usize) -> &SamplingMask {
        &self.masks[shot]
    }

    pub fn meta(&self) -> &AcqMeta {
        &self.meta
    }

    /// Same data with every sample multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> AcquisitionSet {
        let mut out = self.clone();
        for k in &mut out.kspace {
            for z in k.as_mut_slice() {
                *z *= factor;
            }
        }
        out
    }

    /// Replaces the masks (e.g. after retrospective undersampling) and
    /// re-applies them to the data.
    pub fn with_masks(&self, masks: Vec<SamplingMask>) -> Result<AcquisitionSet> {
        if masks.len() != self.shots {
            return Err(Error::CountMismatch {
                what: "masks",
                expected: self.shots,
                found: masks.len(),
            });
        }
        AcquisitionSet::new(self.kspace.clone(), self.channels, masks, self.meta.clone())
    }

    /// Root-sum-of-squares over channels of the zero-filled image of all
    /// shots merged.
    pub fn zero_filled_rss(&self) -> RealImage {
        let fft = CenteredFft::new(self.rows, self.cols);
        let mut acc = RealImage::zeros(self.rows, self.cols);
        for h in 0..self.channels {
            let mut merged = ComplexGrid::zeros(self.rows, self.cols, Domain::Kspace);
            for j in 0..self.shots {
                for (o, v) in merged
                    .as_mut_slice()
                    .iter_mut()
                    .zip(self.kspace(j, h).as_slice())
                {
                    *o += v;
                }
            }
            let img = fft.inverse(&merged);
            for (a, z) in acc.as_mut_slice().iter_mut().zip(img.as_slice()) {
                *a += z.norm_sqr();
            }
        }
        acc.map(f64::sqrt)
    }
}

/// Checks that full-interleave masks are disjoint along phase encode and
/// jointly cover every line.
pub fn validate_masks(masks: &[SamplingMask]) -> Result<()> {
    let Some(first) = masks.first() else {
        return Err(Error::InvalidMask("no masks".into()));
    };
    let cols = first.cols();
    if !masks.iter().all(|m| m.kind() == MaskKind::FullInterleave) {
        return Ok(());
    }
    let mut owner: Vec<Option<usize>> = vec![None; cols];
    for (j, m) in masks.iter().enumerate() {
        for line in m.pe_lines() {
            if let Some(other) = owner[line] {
                return Err(Error::InvalidMask(format!(
                    "phase-encode line {line} is sampled by shots {other} and {j}"
                )));
            }
            owner[line] = Some(j);
        }
    }
    if let Some(missing) = owner.iter().position(Option::is_none) {
        return Err(Error::InvalidMask(format!(
            "phase-encode line {missing} is not sampled by any shot"
        )));
    }
    Ok(())
}

/// Rescales k-space so the zero-filled channel-combined image peaks at 1.
///
/// Returns the rescaled set and the factor that was applied.
pub fn normalize_global(set: &AcquisitionSet) -> Result<(AcquisitionSet, f64)> {
    let peak = set.zero_filled_rss().max();
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::ZeroData);
    }
    let scale = 1.0 / peak;
    Ok((set.scaled(scale), scale))
}

/// Complex receive sensitivities, one grid per channel.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilMapSet {
    maps: Vec<ComplexGrid>,
    normalized: bool,
}

impl CoilMapSet {
    pub fn new(maps: Vec<ComplexGrid>) -> Result<Self> {
        let first = maps
            .first()
            .ok_or_else(|| Error::InvalidParameter("coil set needs at least one map".into()))?;
        let shape = first.shape();
        for m in &maps {
            check_shape(shape, m.shape())?;
            if !m.is_finite() {
                return Err(Error::NonFinite("coil maps"));
            }
        }
        let maps = maps.into_iter().map(|m| m.with_domain(Domain::Image)).collect();
        Ok(Self {
            maps,
            normalized: false,
        })
    }

    /// Unit coil (single channel, all ones).
    pub fn unit(rows: usize, cols: usize) -> Self {
        Self {
            maps: vec![ComplexGrid::from_fn(rows, cols, Domain::Image, |_, _| {
                Complex64::new(1.0, 0.0)
            })],
            normalized: true,
        }
    }

    /// Divides by `sqrt(sum_h |C_h|^2)` per pixel; pixels where every
    /// map vanishes stay zero (background).
    pub fn normalized(mut self) -> Self {
        let (n, m) = self.shape();
        for idx in 0..n * m {
            let s: f64 = self.maps.iter().map(|c| c.as_slice()[idx].norm_sqr()).sum();
            if s > 0.0 {
                let inv = 1.0 / s.sqrt();
                for c in &mut self.maps {
                    c.as_mut_slice()[idx] *= inv;
                }
            }
        }
        self.normalized = true;
        self
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn channels(&self) -> usize {
        self.maps.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.maps[0].shape()
    }

    pub fn get(&self, h: usize) -> &ComplexGrid {
        &self.maps[h]
    }

    pub fn maps(&self) -> &[ComplexGrid] {
        &self.maps
    }

    /// `sum_h |C_h|^2` per pixel.
    pub fn energy(&self) -> RealImage {
        let (n, m) = self.shape();
        RealImage::from_fn(n, m, |r, c| self.maps.iter().map(|x| x.get(r, c).norm_sqr()).sum())
    }

    /// Pixels with nonzero total sensitivity.
    pub fn support(&self) -> Vec<bool> {
        self.energy().as_slice().iter().map(|&e| e > 0.0).collect()
    }

    /// Container form used on disk: channels in the channel slot, one shot.
    pub fn to_acquisition(&self) -> AcquisitionSet {
        let (n, m) = self.shape();
        let maps = self
            .maps
            .iter()
            .map(|c| c.clone().with_domain(Domain::Kspace))
            .collect();
        AcquisitionSet::new(maps, self.channels(), vec![SamplingMask::full(n, m)], AcqMeta::default())
            .expect("coil maps always form a valid single-shot container")
    }

    pub fn from_acquisition(set: &AcquisitionSet) -> Result<Self> {
        if set.shots() != 1 {
            return Err(Error::CountMismatch {
                what: "coil container shots",
                expected: 1,
                found: set.shots(),
            });
        }
        let maps = set.all_kspace().iter().map(|g| g.clone().with_domain(Domain::Image)).collect();
        Ok(Self::new(maps)?.normalized())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_set(seed: u64, rows: usize, cols: usize, channels: usize, shots: usize) -> AcquisitionSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let masks: Vec<SamplingMask> = (0..shots)
            .map(|j| {
                let lines: Vec<usize> = (j..cols).step_by(shots).collect();
                SamplingMask::from_lines(rows, cols, MaskKind::FullInterleave, &lines).unwrap()
            })
            .collect();
        let kspace = (0..shots * channels)
            .map(|_| {
                ComplexGrid::from_fn(rows, cols, Domain::Kspace, |_, _| {
                    Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                })
            })
            .collect();
        AcquisitionSet::new(kspace, channels, masks, AcqMeta::default()).unwrap()
    }

    #[test]
    fn construction_zeroes_unsampled_entries() {
        let set = random_set(1, 6, 8, 2, 4);
        for j in 0..4 {
            for h in 0..2 {
                let k = set.kspace(j, h);
                for r in 0..6 {
                    for c in 0..8 {
                        if !set.mask(j).get(r, c) {
                            assert_eq!(k.get(r, c), Complex64::new(0.0, 0.0));
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn overlapping_interleave_is_rejected() {
        let a = SamplingMask::from_lines(4, 4, MaskKind::FullInterleave, &[0, 3]).unwrap();
        let b = SamplingMask::from_lines(4, 4, MaskKind::FullInterleave, &[1, 2, 3]).unwrap();
        assert!(matches!(validate_masks(&[a.clone(), b]), Err(Error::InvalidMask(_))));
        let c = SamplingMask::from_lines(4, 4, MaskKind::FullInterleave, &[1]).unwrap();
        assert!(validate_masks(&[a.clone(), c.clone()]).is_err(), "line 2 uncovered");
        // undersampled patterns are exempt from the partition rule
        let a = a.with_kind(MaskKind::UniformUndersampled);
        let c = c.with_kind(MaskKind::UniformUndersampled);
        assert!(validate_masks(&[a, c]).is_ok());
    }

    #[test]
    fn normalization_scales_and_is_idempotent() {
        let set = random_set(4, 8, 8, 3, 2);
        let (norm, scale) = normalize_global(&set).unwrap();
        assert!((norm.zero_filled_rss().max() - 1.0).abs() < 1e-12);
        let (_, again) = normalize_global(&norm).unwrap();
        assert!((again - 1.0).abs() < 1e-12);

        let (norm10, scale10) = normalize_global(&set.scaled(10.0)).unwrap();
        assert!((scale10 - scale / 10.0).abs() < 1e-12 * scale);
        for (a, b) in norm10.all_kspace().iter().zip(norm.all_kspace()) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert!((x - y).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn normalization_rejects_zero_data() {
        let set = random_set(2, 4, 4, 1, 1).scaled(0.0);
        assert!(matches!(normalize_global(&set), Err(Error::ZeroData)));
    }

    #[test]
    fn coil_normalization_gives_unit_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let maps = (0..4)
            .map(|_| {
                ComplexGrid::from_fn(5, 5, Domain::Image, |r, c| {
                    if r == 0 && c == 0 {
                        Complex64::new(0.0, 0.0)
                    } else {
                        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
                    }
                })
            })
            .collect();
        let coils = CoilMapSet::new(maps).unwrap().normalized();
        let e = coils.energy();
        assert_eq!(e.get(0, 0), 0.0);
        for (i, v) in e.as_slice().iter().enumerate().skip(1) {
            assert!((v - 1.0).abs() < 1e-12, "pixel {i}");
        }
    }
}
