//! Ground-truth generation for simulated multi-shot acquisitions.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::acquisition::{AcqMeta, AcquisitionSet, CoilMapSet};
use crate::error::{Error, Result};
use crate::fft::CenteredFft;
use crate::grid::{check_shape, ComplexGrid, Domain, RealImage};
use crate::operators::{encode_image, MaskKind, SamplingMask, ShotPhaseSet};

/// One ellipse: additive intensity, semi-axes, center, rotation in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ellipse {
    pub intensity: f64,
    pub a: f64,
    pub b: f64,
    pub x0: f64,
    pub y0: f64,
    pub phi_deg: f64,
}

impl Ellipse {
    const fn new(intensity: f64, a: f64, b: f64, x0: f64, y0: f64, phi_deg: f64) -> Self {
        Self {
            intensity,
            a,
            b,
            x0,
            y0,
            phi_deg,
        }
    }

    /// Inclusive point test in normalized coordinates.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.phi_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.x0, y - self.y0);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        (u / self.a).powi(2) + (v / self.b).powi(2) <= 1.0
    }

    /// Left-right mirror image.
    pub fn mirrored(&self) -> Self {
        Self {
            x0: -self.x0,
            phi_deg: -self.phi_deg,
            ..*self
        }
    }
}

/// Modified (higher contrast) Shepp-Logan table.
pub const MODIFIED_SHEPP_LOGAN: [Ellipse; 10] = [
    Ellipse::new(1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    Ellipse::new(-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0),
    Ellipse::new(-0.2, 0.11, 0.31, 0.22, 0.0, -18.0),
    Ellipse::new(-0.2, 0.16, 0.41, -0.22, 0.0, 18.0),
    Ellipse::new(0.1, 0.21, 0.25, 0.0, 0.35, 0.0),
    Ellipse::new(0.1, 0.046, 0.046, 0.0, 0.1, 0.0),
    Ellipse::new(0.1, 0.046, 0.046, 0.0, -0.1, 0.0),
    Ellipse::new(0.1, 0.046, 0.023, -0.08, -0.605, 0.0),
    Ellipse::new(0.1, 0.023, 0.023, 0.0, -0.606, 0.0),
    Ellipse::new(0.1, 0.023, 0.046, 0.06, -0.605, 0.0),
];

/// Normalized coordinates of pixel `(r, c)`: `x` to the right along
/// columns, `y` upward along rows, both in `(-1, 1)`.
pub fn normalized_coords(n: usize, m: usize, r: usize, c: usize) -> (f64, f64) {
    let x = (2.0 * c as f64 + 1.0 - m as f64) / m as f64;
    let y = (n as f64 - 1.0 - 2.0 * r as f64) / n as f64;
    (x, y)
}

/// Rasterizes an ellipse table at pixel centers, clamped to `[0, 1]`.
pub fn rasterize(table: &[Ellipse], n: usize, m: usize) -> RealImage {
    RealImage::from_fn(n, m, |r, c| {
        let (x, y) = normalized_coords(n, m, r, c);
        let v: f64 = table
            .iter()
            .filter(|e| e.contains(x, y))
            .map(|e| e.intensity)
            .sum();
        v.clamp(0.0, 1.0)
    })
}

pub fn shepp_logan(n: usize, m: usize) -> Result<RealImage> {
    if n < 16 || m < 16 {
        return Err(Error::InvalidParameter(format!("phantom needs at least 16x16, got {n}x{m}")));
    }
    Ok(rasterize(&MODIFIED_SHEPP_LOGAN, n, m))
}

/// Receive-loop arrangement around the field of view.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CoilGeometry {
    /// Loop radius as a fraction of the field of view.
    pub loop_radius: f64,
    /// Distance of the loop centers from the image center, in half-FOVs.
    pub ring_factor: f64,
    /// Wire segments per loop.
    pub segments: usize,
}

impl Default for CoilGeometry {
    fn default() -> Self {
        Self {
            loop_radius: 0.4,
            ring_factor: 1.5,
            segments: 64,
        }
    }
}

type Vec3 = [f64; 3];

fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// In-plane field of a polygonal current loop at `p` (constants dropped).
fn loop_field(wire: &[Vec3], p: Vec3) -> (f64, f64) {
    let (mut bx, mut by) = (0.0, 0.0);
    for i in 0..wire.len() {
        let a = wire[i];
        let b = wire[(i + 1) % wire.len()];
        let dl = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0, (a[2] + b[2]) / 2.0];
        let d = [p[0] - mid[0], p[1] - mid[1], p[2] - mid[2]];
        let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
        let f = cross(dl, d);
        let inv = 1.0 / (r2 * r2.sqrt());
        bx += f[0] * inv;
        by += f[1] * inv;
    }
    (bx, by)
}

/// Sensitivities of `h` loops evenly spaced on a ring, each facing the
/// image center, as `B_x - i B_y`, normalized to unit root-sum-of-squares.
///
/// Geometry is in pixel units about the geometric center, with `x` along
/// rows and `y` along columns; coil `h` sits at angle `2πh/H`.
pub fn biot_savart_coils(n: usize, m: usize, h: usize, geometry: &CoilGeometry) -> Result<CoilMapSet> {
    if h == 0 {
        return Err(Error::InvalidParameter("need at least one coil".into()));
    }
    if !(geometry.loop_radius > 0.0) {
        return Err(Error::DegenerateGeometry("loop radius must be positive".into()));
    }
    if geometry.segments < 3 {
        return Err(Error::DegenerateGeometry("a loop needs at least 3 segments".into()));
    }
    if !(geometry.ring_factor > 2f64.sqrt()) {
        return Err(Error::DegenerateGeometry(
            "coil ring must lie outside the field-of-view corners".into(),
        ));
    }
    let fov = n.max(m) as f64;
    let ring = geometry.ring_factor * fov / 2.0;
    let radius = geometry.loop_radius * fov;
    let (cr, cc) = ((n as f64 - 1.0) / 2.0, (m as f64 - 1.0) / 2.0);
    let mut maps = Vec::with_capacity(h);
    for k in 0..h {
        let theta = 2.0 * PI * k as f64 / h as f64;
        let (s, c) = theta.sin_cos();
        let center = [ring * c, ring * s, 0.0];
        // loop plane spanned by the in-plane tangent and the slice normal
        let tangent = [-s, c, 0.0];
        let wire: Vec<Vec3> = (0..geometry.segments)
            .map(|i| {
                let t = 2.0 * PI * i as f64 / geometry.segments as f64;
                let (st, ct) = t.sin_cos();
                [
                    center[0] + radius * ct * tangent[0],
                    center[1] + radius * ct * tangent[1],
                    radius * st,
                ]
            })
            .collect();
        maps.push(ComplexGrid::from_fn(n, m, Domain::Image, |r, col| {
            let p = [r as f64 - cr, col as f64 - cc, 0.0];
            let (bx, by) = loop_field(&wire, p);
            Complex64::new(bx, -by)
        }));
    }
    let set = CoilMapSet::new(maps)?;
    if set.energy().as_slice().iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
        return Err(Error::DegenerateGeometry("coil field vanishes inside the image".into()));
    }
    Ok(set.normalized())
}

/// Coefficients `a1..a6` of one shot's second-order phase polynomial.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseCoefficients(pub [f64; 6]);

/// Per-shot motion phase polynomials.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MotionPhaseParams {
    pub shots: Vec<PhaseCoefficients>,
    pub seed: u64,
}

impl MotionPhaseParams {
    /// Half-widths of the symmetric sampling interval of each coefficient.
    pub fn ranges(n: usize, m: usize) -> [f64; 6] {
        let (n, m) = (n as f64, m as f64);
        [
            PI,
            PI / (2.0 * n),
            PI / (2.0 * m),
            PI / (3.0 * n * n),
            PI / (3.0 * m * m),
            PI / (3.0 * n * m),
        ]
    }

    /// Draws each coefficient uniformly from `[-range, range)`.
    pub fn sample(shots: usize, n: usize, m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ranges = Self::ranges(n, m);
        let shots = (0..shots)
            .map(|_| {
                let mut a = [0.0; 6];
                for (v, w) in a.iter_mut().zip(ranges) {
                    *v = rng.random_range(-w..w);
                }
                PhaseCoefficients(a)
            })
            .collect();
        Self { shots, seed }
    }

    pub fn validate(&self, n: usize, m: usize) -> Result<()> {
        let ranges = Self::ranges(n, m);
        for (j, s) in self.shots.iter().enumerate() {
            for (i, (&v, w)) in s.0.iter().zip(ranges).enumerate() {
                if !(v >= -w && v < w) {
                    return Err(Error::InvalidParameter(format!(
                        "shot {j} coefficient a{} = {v} outside [-{w}, {w})",
                        i + 1
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `a1 + a2 x + a3 y + a4 x² + a5 y² + a6 x y` with `x` the row and `y`
/// the column index.
pub fn polynomial_shot_phase(params: &MotionPhaseParams, j: usize, n: usize, m: usize) -> Result<RealImage> {
    let a = params
        .shots
        .get(j)
        .ok_or_else(|| Error::InvalidParameter(format!("no coefficients for shot {j}")))?
        .0;
    Ok(polynomial_phase(&a, n, m))
}

pub fn polynomial_phase(a: &[f64; 6], n: usize, m: usize) -> RealImage {
    RealImage::from_fn(n, m, |r, c| {
        let (x, y) = (r as f64, c as f64);
        a[0] + a[1] * x + a[2] * y + a[3] * x * x + a[4] * y * y + a[5] * x * y
    })
}

/// Half-width of the central k-space block of the background phase.
const BACKGROUND_BLOCK: usize = 2;

/// Smooth random phase: real part of the inverse transform of random
/// values in the central 5×5 k-space block, scaled to peak `π/2`.
pub fn background_phase(n: usize, m: usize, seed: u64) -> RealImage {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (cr, cc) = (n / 2, m / 2);
    let b = BACKGROUND_BLOCK;
    let mut k = ComplexGrid::zeros(n, m, Domain::Kspace);
    for r in cr.saturating_sub(b)..(cr + b + 1).min(n) {
        for c in cc.saturating_sub(b)..(cc + b + 1).min(m) {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            k.set(r, c, Complex64::new(re, im));
        }
    }
    let field = CenteredFft::new(n, m).inverse(&k).real_part();
    let peak = field.as_slice().iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if peak > 0.0 {
        field.scaled(PI / 2.0 / peak)
    } else {
        field
    }
}

/// Diffusivity, uniform or per pixel (mm²/s).
#[derive(Clone, Debug, PartialEq)]
pub enum Diffusivity {
    Uniform(f64),
    Map(RealImage),
}

/// `s0 exp(-b D)`.
pub fn diffusion_decay(s0: &RealImage, b: f64, d: &Diffusivity) -> Result<RealImage> {
    if !(b >= 0.0) {
        return Err(Error::InvalidParameter(format!("b-value must be >= 0, got {b}")));
    }
    match d {
        Diffusivity::Uniform(v) => {
            if !(*v >= 0.0) {
                return Err(Error::InvalidParameter(format!("diffusivity must be >= 0, got {v}")));
            }
            let f = (-b * v).exp();
            Ok(s0.map(|s| s * f))
        }
        Diffusivity::Map(map) => {
            check_shape(s0.shape(), map.shape())?;
            if map.as_slice().iter().any(|&v| !(v >= 0.0)) {
                return Err(Error::InvalidParameter("diffusivity map has negative entries".into()));
            }
            let (n, m) = s0.shape();
            Ok(RealImage::from_fn(n, m, |r, c| s0.get(r, c) * (-b * map.get(r, c)).exp()))
        }
    }
}

/// Shot `j` samples phase-encode lines `j, j + J, j + 2J, ...`.
pub fn make_interleave_masks(n: usize, m: usize, shots: usize) -> Result<Vec<SamplingMask>> {
    if shots == 0 || shots > m {
        return Err(Error::InvalidParameter(format!(
            "shot count must lie in [1, {m}], got {shots}"
        )));
    }
    (0..shots)
        .map(|j| {
            let lines: Vec<usize> = (j..m).step_by(shots).collect();
            SamplingMask::from_lines(n, m, MaskKind::FullInterleave, &lines)
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UndersampleMode {
    Uniform,
    PartialFourier,
}

/// Lines of the central partial-Fourier band.
pub const PARTIAL_FOURIER_BAND: usize = 8;

/// Retrospective undersampling of each shot's acquired lines.
///
/// Uniform mode keeps every `ceil(1/rate)`-th acquired line starting from
/// the first; partial-Fourier mode keeps lines below `ceil(rate M)` plus a
/// central band of [`PARTIAL_FOURIER_BAND`] lines.
pub fn retrospective_undersample(
    masks: &[SamplingMask],
    mode: UndersampleMode,
    rate: f64,
) -> Result<Vec<SamplingMask>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidParameter(format!("rate must lie in (0, 1], got {rate}")));
    }
    if rate == 1.0 {
        return Ok(masks.to_vec());
    }
    masks
        .iter()
        .enumerate()
        .map(|(j, mask)| {
            let (n, m) = mask.shape();
            let acquired = mask.pe_lines();
            let (kept, kind): (Vec<usize>, _) = match mode {
                UndersampleMode::Uniform => {
                    let step = (1.0 / rate).ceil() as usize;
                    (acquired.into_iter().step_by(step).collect(), MaskKind::UniformUndersampled)
                }
                UndersampleMode::PartialFourier => {
                    let limit = (rate * m as f64).ceil() as usize;
                    let lo = (m / 2).saturating_sub(PARTIAL_FOURIER_BAND / 2);
                    let hi = (lo + PARTIAL_FOURIER_BAND).min(m);
                    (
                        acquired
                            .into_iter()
                            .filter(|&l| l < limit || (lo..hi).contains(&l))
                            .collect(),
                        MaskKind::PartialFourier,
                    )
                }
            };
            if kept.is_empty() {
                return Err(Error::InvalidMask(format!("undersampling leaves shot {j} empty")));
            }
            SamplingMask::from_lines(n, m, kind, &kept)
        })
        .collect()
}

/// Unit phases `exp(-i (ϕ_j + φ))`.
pub fn shot_phases(motion: &[RealImage], background: &RealImage) -> Result<ShotPhaseSet> {
    let total: Vec<RealImage> = motion
        .iter()
        .map(|p| {
            check_shape(background.shape(), p.shape())?;
            let (n, m) = p.shape();
            Ok(RealImage::from_fn(n, m, |r, c| p.get(r, c) + background.get(r, c)))
        })
        .collect::<Result<_>>()?;
    ShotPhaseSet::from_angles(&total, -1.0)
}

/// `Y_hj = mask_j ⊙ F(C_h ⊙ P_j ⊙ m) + noise`.
///
/// Noise is complex white Gaussian on sampled entries only, with power
/// set relative to the mean sampled signal power; `None` disables it.
pub fn synthesize_acquisition(
    magnitude: &RealImage,
    coils: &CoilMapSet,
    phases: &ShotPhaseSet,
    masks: &[SamplingMask],
    noise_snr_db: Option<f64>,
    seed: u64,
    meta: AcqMeta,
) -> Result<AcquisitionSet> {
    let shape = magnitude.shape();
    check_shape(shape, coils.shape())?;
    check_shape(shape, phases.shape())?;
    if masks.len() != phases.shots() {
        return Err(Error::CountMismatch {
            what: "sampling masks",
            expected: phases.shots(),
            found: masks.len(),
        });
    }
    let fft = CenteredFft::new(shape.0, shape.1);
    let mut kspace = Vec::with_capacity(phases.shots() * coils.channels());
    for (p, mask) in phases.iter().zip(masks) {
        let mut x = p.clone();
        for (z, v) in x.as_mut_slice().iter_mut().zip(magnitude.as_slice()) {
            *z *= v;
        }
        for coil in coils.maps() {
            kspace.push(encode_image(&fft, &x, coil, mask));
        }
    }
    if let Some(snr) = noise_snr_db {
        if !snr.is_finite() {
            return Err(Error::InvalidParameter(format!("noise SNR must be finite, got {snr}")));
        }
        let (mut power, mut count) = (0.0, 0usize);
        for (i, k) in kspace.iter().enumerate() {
            let mask = &masks[i / coils.channels()];
            for (z, &s) in k.as_slice().iter().zip(mask.as_slice()) {
                if s {
                    power += z.norm_sqr();
                    count += 1;
                }
            }
        }
        let noise_power = power / count.max(1) as f64 / 10f64.powf(snr / 10.0);
        let normal = Normal::new(0.0, (noise_power / 2.0).sqrt())
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (i, k) in kspace.iter_mut().enumerate() {
            let mask = &masks[i / coils.channels()];
            for (z, &s) in k.as_mut_slice().iter_mut().zip(mask.as_slice()) {
                if s {
                    *z += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
                }
            }
        }
    }
    AcquisitionSet::new(kspace, coils.channels(), masks.to_vec(), meta)
}

/// Parameters of a complete simulated scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub rows: usize,
    pub cols: usize,
    pub shots: usize,
    pub channels: usize,
    /// k-space SNR in dB; `None` for noiseless data.
    pub snr_db: Option<f64>,
    pub seed: u64,
    pub b_value: f64,
    pub diffusivity: f64,
    pub direction: Option<[f64; 3]>,
    pub coils: CoilGeometry,
    pub undersample: Option<UndersampleSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UndersampleSpec {
    pub mode: UndersampleMode,
    pub rate: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            rows: 128,
            cols: 128,
            shots: 4,
            channels: 8,
            snr_db: Some(10.0),
            seed: 0,
            b_value: 1000.0,
            diffusivity: 0.7e-3,
            direction: Some([1.0, 0.0, 0.0]),
            coils: CoilGeometry::default(),
            undersample: None,
        }
    }
}

/// A simulated scan with its ground truth.
#[derive(Clone, Debug)]
pub struct Scenario {
    pub acquisition: AcquisitionSet,
    pub coils: CoilMapSet,
    /// Diffusion-weighted magnitude the reconstruction should recover.
    pub magnitude: RealImage,
    /// Noiseless b = 0 image.
    pub m0: RealImage,
    /// True unit phases `exp(-i (ϕ_j + φ))`.
    pub phases: ShotPhaseSet,
    pub motion: MotionPhaseParams,
}

/// Seeds for the independent random streams of a scenario.
fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(stream)
}

pub fn simulate(config: &ScenarioConfig) -> Result<Scenario> {
    let (n, m) = (config.rows, config.cols);
    let s0 = shepp_logan(n, m)?;
    let magnitude = diffusion_decay(&s0, config.b_value, &Diffusivity::Uniform(config.diffusivity))?;
    let coils = biot_savart_coils(n, m, config.channels, &config.coils)?;
    let motion = MotionPhaseParams::sample(config.shots, n, m, sub_seed(config.seed, 1));
    let angles: Vec<RealImage> = (0..config.shots)
        .map(|j| polynomial_shot_phase(&motion, j, n, m))
        .collect::<Result<_>>()?;
    let background = background_phase(n, m, sub_seed(config.seed, 2));
    let phases = shot_phases(&angles, &background)?;
    let mut masks = make_interleave_masks(n, m, config.shots)?;
    if let Some(u) = config.undersample {
        masks = retrospective_undersample(&masks, u.mode, u.rate)?;
    }
    let meta = AcqMeta {
        b_value: config.b_value,
        direction: if config.b_value > 0.0 { config.direction } else { None },
    };
    let acquisition = synthesize_acquisition(
        &magnitude,
        &coils,
        &phases,
        &masks,
        config.snr_db,
        sub_seed(config.seed, 3),
        meta,
    )?;
    Ok(Scenario {
        acquisition,
        coils,
        magnitude,
        m0: s0,
        phases,
        motion,
    })
}
