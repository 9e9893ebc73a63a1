//! Iterative solvers: PAIR (shared magnitude, explicit per-shot phases),
//! its PHASE and PAIR-TV variants, and the implicit-phase PLRHM baseline.
//!
//! One PAIR iteration runs three steps in order:
//!
//! 1. data consistency per shot, `I_j = sum_h C_h* G_hj` with
//!    `G_hj = C_h P_j m + λ F* U* (Y_hj - U F C_h P_j m)`;
//! 2. phase update, `P_j = phase(lowrank_project(I_j))`, by default with
//!    the lifted matrices of all shots stacked into one SVT;
//! 3. magnitude update, `m_avg = Re(mean_j P_j* I_j)`, one weighted-TV
//!    gradient step, relaxation by `η` and clamping at zero.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::acquisition::{AcquisitionSet, CoilMapSet};
use crate::error::{Error, Result};
use crate::fft::CenteredFft;
use crate::grid::{check_shape, diff_norm_sqr, ComplexGrid, Domain, RealImage};
use crate::lifting::{LiftingMode, LowRankProjector, SupportRegion, ThresholdScale};
use crate::operators::{decode_kspace, encode_image, ShotPhaseSet};
use crate::wtv::{compute_weights, wtv_subgradient, EdgeWeights};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "PAIR")]
    Pair,
    #[serde(rename = "PAIR-TV")]
    PairTv,
    #[serde(rename = "PHASE")]
    Phase,
    #[serde(rename = "PLRHM")]
    Plrhm,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Pair => "PAIR",
            Method::PairTv => "PAIR-TV",
            Method::Phase => "PHASE",
            Method::Plrhm => "PLRHM",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "PAIR" | "PAIR-WTV" => Ok(Method::Pair),
            "PAIR-TV" => Ok(Method::PairTv),
            "PHASE" => Ok(Method::Phase),
            "PLRHM" => Ok(Method::Plrhm),
            _ => Err(Error::Config(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReconConfig {
    /// Residual step size in the data-consistency update.
    pub lambda: f64,
    /// Weighted-TV step weight.
    pub beta: f64,
    /// Magnitude relaxation, in `[1, 2)`.
    pub eta: f64,
    /// Number of leading singular values kept untouched.
    pub eps_keep: usize,
    /// Soft threshold applied to the remaining singular values.
    pub sigma: f64,
    /// Whether `sigma` is absolute or a fraction of `s_{ε+1}`.
    pub sigma_scale: ThresholdScale,
    /// Joint or per-shot lifting for the phase update.
    pub lifting: LiftingMode,
    /// Radius of the phase spectrum support.
    pub radius: usize,
    /// Edge-weight deviation.
    pub delta: f64,
    pub max_iters: usize,
    /// Stop when `|m_{k+1} - m_k|² / |m_k|²` falls below this.
    pub tol: f64,
    pub method: Method,
    pub seed: u64,
    /// Smoothing `ε_tv` of the TV norm.
    pub tv_smoothing: f64,
    /// Relative change (or relative data residual) above which the run is
    /// declared divergent.
    pub divergence_limit: f64,
}

impl Default for ReconConfig {
    fn default() -> Self {
        Self {
            lambda: 1.0,
            beta: 2e-3,
            eta: 1.5,
            eps_keep: 25,
            sigma: 0.6,
            sigma_scale: ThresholdScale::Relative,
            lifting: LiftingMode::Joint,
            radius: 2,
            delta: 0.01,
            max_iters: 1000,
            tol: 1e-5,
            method: Method::Pair,
            seed: 0,
            tv_smoothing: 1e-2,
            divergence_limit: 1e3,
        }
    }
}

impl ReconConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidParameter(msg));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be > 0, got {}", self.lambda));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return fail(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.eta >= 1.0 && self.eta < 2.0) {
            return fail(format!("eta must lie in [1, 2), got {}", self.eta));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return fail(format!("sigma must be >= 0, got {}", self.sigma));
        }
        if !(self.delta > 0.0) {
            return fail(format!("delta must be > 0, got {}", self.delta));
        }
        if !(self.tol > 0.0) {
            return fail(format!("tol must be > 0, got {}", self.tol));
        }
        if self.max_iters == 0 {
            return fail("max_iters must be >= 1".into());
        }
        if !(self.tv_smoothing >= 0.0 && self.tv_smoothing.is_finite()) {
            return fail(format!("tv_smoothing must be >= 0, got {}", self.tv_smoothing));
        }
        if !(self.divergence_limit > 0.0) {
            return fail(format!("divergence_limit must be > 0, got {}", self.divergence_limit));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReconState {
    pub magnitude: RealImage,
    pub phases: ShotPhaseSet,
    pub shot_images: Vec<ComplexGrid>,
    pub iteration: usize,
    pub history: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub relative_change: f64,
    /// `sum |Y - A(x)|² / sum |Y|²` at the start of the iteration.
    pub data_residual: f64,
    pub elapsed_secs: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopReason {
    Converged,
    MaxIters,
}

#[derive(Clone, Debug)]
pub struct ReconResult {
    pub magnitude: RealImage,
    pub phases: ShotPhaseSet,
    pub iterations: usize,
    pub wall_time_secs: f64,
    pub trace: Vec<TraceEntry>,
    pub config: ReconConfig,
    pub stop: StopReason,
}

impl ReconResult {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }
}

/// Where the edge weights for the magnitude step come from.
#[derive(Clone, Debug)]
pub enum WeightSource {
    /// Ready-made weights.
    Weights(EdgeWeights),
    /// b = 0 image; weights are computed with the configured `δ`.
    Reference(RealImage),
    /// Plain TV.
    Unit,
}

/// `|next - prev|² / |prev|²` (0 for two zero images, ∞ from zero).
pub fn relative_change(prev: &RealImage, next: &RealImage) -> f64 {
    let num = diff_norm_sqr(prev, next);
    let den = prev.norm_sqr();
    if den > 0.0 {
        num / den
    } else if num == 0.0 {
        0.0
    } else {
        f64::INFINITY
    }
}

/// True once the last two iterates differ by less than `tol` relatively.
pub fn check_convergence(history: &[RealImage], tol: f64) -> bool {
    match history {
        [.., prev, next] => relative_change(prev, next) < tol,
        _ => false,
    }
}

/// Shared per-run resources: transform, coils, acquisition, projector.
struct Engine<'a> {
    acq: &'a AcquisitionSet,
    coils: &'a CoilMapSet,
    fft: CenteredFft,
    energy: RealImage,
    lambda: f64,
}

impl<'a> Engine<'a> {
    fn new(acq: &'a AcquisitionSet, coils: &'a CoilMapSet, lambda: f64) -> Result<Self> {
        check_shape(acq.shape(), coils.shape())?;
        if acq.channels() != coils.channels() {
            return Err(Error::CountMismatch {
                what: "coil channels",
                expected: acq.channels(),
                found: coils.channels(),
            });
        }
        let (n, m) = acq.shape();
        Ok(Self {
            acq,
            coils,
            fft: CenteredFft::new(n, m),
            energy: coils.energy(),
            lambda,
        })
    }

    /// Data-consistency update of one shot image `x`; returns the new
    /// image and the squared data residual of `x`.
    fn consistency(&self, j: usize, x: &ComplexGrid) -> (ComplexGrid, f64) {
        let mask = self.acq.mask(j);
        let mut out = x.clone();
        for (z, e) in out.as_mut_slice().iter_mut().zip(self.energy.as_slice()) {
            *z *= e;
        }
        let mut residual = 0.0;
        for h in 0..self.acq.channels() {
            let coil = self.coils.get(h);
            let mut r = encode_image(&self.fft, x, coil, mask);
            for (v, y) in r.as_mut_slice().iter_mut().zip(self.acq.kspace(j, h).as_slice()) {
                *v = y - *v;
            }
            mask.apply(&mut r);
            residual += r.norm_sqr();
            let back = decode_kspace(&self.fft, &r, coil, mask);
            for (o, b) in out.as_mut_slice().iter_mut().zip(back.as_slice()) {
                *o += self.lambda * b;
            }
        }
        (out.with_domain(Domain::Image), residual)
    }

    fn data_energy(&self) -> f64 {
        self.acq.all_kspace().iter().map(|k| k.norm_sqr()).sum()
    }

    /// Zero-filled coil-combined image of each shot.
    fn zero_filled(&self) -> Vec<ComplexGrid> {
        (0..self.acq.shots())
            .map(|j| {
                let mask = self.acq.mask(j);
                let (n, m) = self.acq.shape();
                let mut acc = ComplexGrid::zeros(n, m, Domain::Image);
                for h in 0..self.acq.channels() {
                    let img = decode_kspace(&self.fft, self.acq.kspace(j, h), self.coils.get(h), mask);
                    for (a, b) in acc.as_mut_slice().iter_mut().zip(img.as_slice()) {
                        *a += b;
                    }
                }
                acc
            })
            .collect()
    }

    fn support(&self) -> Vec<bool> {
        self.energy.as_slice().iter().map(|&e| e > 0.0).collect()
    }
}

fn shot_products(m: &RealImage, phases: &ShotPhaseSet) -> Vec<ComplexGrid> {
    phases
        .iter()
        .map(|p| {
            let mut x = p.clone();
            for (z, v) in x.as_mut_slice().iter_mut().zip(m.as_slice()) {
                *z *= v;
            }
            x
        })
        .collect()
}

/// Zero-filled initialization: density-compensated root-mean-square
/// magnitude and per-shot zero-filled phases.
pub fn initial_state(acq: &AcquisitionSet, coils: &CoilMapSet) -> Result<ReconState> {
    let engine = Engine::new(acq, coils, 1.0)?;
    Ok(init_from(&engine))
}

fn init_from(engine: &Engine) -> ReconState {
    let z = engine.zero_filled();
    let shots = z.len();
    let (n, m) = engine.acq.shape();
    let mut acc = RealImage::zeros(n, m);
    for (j, zj) in z.iter().enumerate() {
        let fill = engine.acq.mask(j).fill_fraction();
        let w = 1.0 / (fill * fill);
        for (a, v) in acc.as_mut_slice().iter_mut().zip(zj.as_slice()) {
            *a += w * v.norm_sqr();
        }
    }
    let magnitude = acc.map(|v| (v / shots as f64).sqrt());
    let phases = ShotPhaseSet::from_images(&z).expect("zero-filled images share one shape");
    ReconState {
        magnitude,
        phases,
        shot_images: z,
        iteration: 0,
        history: Vec::new(),
    }
}

/// `I_j = sum_h C_h* (C_h P_j m + λ F* U* (Y_hj - U F C_h P_j m))`.
pub fn data_consistency_step(
    state: &ReconState,
    acq: &AcquisitionSet,
    coils: &CoilMapSet,
    lambda: f64,
) -> Result<Vec<ComplexGrid>> {
    check_shape(acq.shape(), state.magnitude.shape())?;
    if state.phases.shots() != acq.shots() {
        return Err(Error::CountMismatch {
            what: "shot phases",
            expected: acq.shots(),
            found: state.phases.shots(),
        });
    }
    let engine = Engine::new(acq, coils, lambda)?;
    let x = shot_products(&state.magnitude, &state.phases);
    Ok(x
        .iter()
        .enumerate()
        .map(|(j, xj)| engine.consistency(j, xj).0)
        .collect())
}

/// Per-shot low-rank projection with an absolute threshold followed by
/// phase extraction.
pub fn phase_update_step(
    images: &[ComplexGrid],
    support: &SupportRegion,
    eps_keep: usize,
    sigma: f64,
) -> Result<(ShotPhaseSet, Vec<ComplexGrid>)> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidParameter("no shot images".into()))?;
    let (n, m) = first.shape();
    let projector = LowRankProjector::new(n, m, support.radius(), eps_keep, sigma)?;
    project_phases(&projector, images, LiftingMode::PerShot)
}

/// Phase update with the lifting mode and threshold scale of `config`.
pub fn phase_update(images: &[ComplexGrid], config: &ReconConfig) -> Result<(ShotPhaseSet, Vec<ComplexGrid>)> {
    let first = images
        .first()
        .ok_or_else(|| Error::InvalidParameter("no shot images".into()))?;
    let (n, m) = first.shape();
    project_phases(&projector_for(config, n, m)?, images, config.lifting)
}

fn projector_for(config: &ReconConfig, n: usize, m: usize) -> Result<LowRankProjector> {
    Ok(LowRankProjector::new(n, m, config.radius, config.eps_keep, config.sigma)?.with_scale(config.sigma_scale))
}

fn project_phases(
    projector: &LowRankProjector,
    images: &[ComplexGrid],
    mode: LiftingMode,
) -> Result<(ShotPhaseSet, Vec<ComplexGrid>)> {
    let projected = projector.project_shots(images, mode)?;
    let phases = ShotPhaseSet::from_images(&projected)?;
    Ok((phases, projected))
}

/// `m + η (m_avg - β ∇wTV(m_avg) - m)`, clamped at zero, with
/// `m_avg = Re(mean_j P_j* I_j)`.
pub fn magnitude_update_step(
    magnitude: &RealImage,
    phases: &ShotPhaseSet,
    images: &[ComplexGrid],
    weights: &EdgeWeights,
    beta: f64,
    eta: f64,
) -> Result<RealImage> {
    let shape = magnitude.shape();
    if images.len() != phases.shots() {
        return Err(Error::CountMismatch {
            what: "shot images",
            expected: phases.shots(),
            found: images.len(),
        });
    }
    let mut avg = RealImage::zeros(shape.0, shape.1);
    for (p, img) in phases.iter().zip(images) {
        check_shape(shape, img.shape())?;
        check_shape(shape, p.shape())?;
        for ((a, pz), iz) in avg
            .as_mut_slice()
            .iter_mut()
            .zip(p.as_slice())
            .zip(img.as_slice())
        {
            *a += (pz.conj() * iz).re;
        }
    }
    let avg = avg.scaled(1.0 / images.len() as f64);
    let target = if beta > 0.0 {
        let g = wtv_subgradient(&avg, weights)?;
        let mut t = avg;
        for (v, d) in t.as_mut_slice().iter_mut().zip(g.as_slice()) {
            *v -= beta * d;
        }
        t
    } else {
        avg
    };
    let mut next = magnitude.clone();
    for (v, t) in next.as_mut_slice().iter_mut().zip(target.as_slice()) {
        *v = (*v + eta * (t - *v)).max(0.0);
    }
    Ok(next)
}

/// Extra controls for [`pair_reconstruct_with`].
#[derive(Clone, Debug, Default)]
pub struct PairOptions {
    /// Keep these phases for the whole run instead of estimating them.
    pub fixed_phases: Option<ShotPhaseSet>,
    /// Start from this state instead of the zero-filled initialization.
    pub initial: Option<ReconState>,
}

/// Runs the configured method.
pub fn reconstruct(
    acq: &AcquisitionSet,
    coils: &CoilMapSet,
    config: &ReconConfig,
    weights: WeightSource,
) -> Result<ReconResult> {
    match config.method {
        Method::Pair => pair_reconstruct(acq, coils, config, weights),
        Method::PairTv => pair_reconstruct(acq, coils, config, WeightSource::Unit),
        Method::Phase => phase_only_reconstruct(acq, coils, config),
        Method::Plrhm => plrhm_reconstruct(acq, coils, config),
    }
}

pub fn pair_reconstruct(
    acq: &AcquisitionSet,
    coils: &CoilMapSet,
    config: &ReconConfig,
    weights: WeightSource,
) -> Result<ReconResult> {
    pair_reconstruct_with(acq, coils, config, weights, &PairOptions::default())
}

/// PAIR with `β = 0`.
pub fn phase_only_reconstruct(acq: &AcquisitionSet, coils: &CoilMapSet, config: &ReconConfig) -> Result<ReconResult> {
    let mut cfg = config.clone();
    cfg.beta = 0.0;
    cfg.method = Method::Phase;
    pair_reconstruct(acq, coils, &cfg, WeightSource::Unit)
}

fn resolve_weights(source: WeightSource, config: &ReconConfig, shape: (usize, usize)) -> Result<EdgeWeights> {
    let w = match source {
        WeightSource::Weights(w) => w,
        WeightSource::Reference(m0) => {
            check_shape(shape, m0.shape())?;
            compute_weights(&m0, config.delta)?
        }
        WeightSource::Unit => EdgeWeights::unit(shape.0, shape.1),
    };
    check_shape(shape, w.shape())?;
    w.with_smoothing(config.tv_smoothing)
}

struct PairRun<'a> {
    engine: Engine<'a>,
    projector: LowRankProjector,
    weights: EdgeWeights,
    config: &'a ReconConfig,
    support: Vec<bool>,
    fixed: Option<ShotPhaseSet>,
}

impl PairRun<'_> {
    /// One full iteration; returns the new state and the data residual
    /// of the incoming state.
    fn step(&self, state: &ReconState) -> Result<(ReconState, f64)> {
        let x = shot_products(&state.magnitude, &state.phases);
        let (dc, residuals): (Vec<ComplexGrid>, Vec<f64>) = x
            .par_iter()
            .enumerate()
            .map(|(j, xj)| self.engine.consistency(j, xj))
            .unzip();
        let phases = match &self.fixed {
            Some(p) => p.clone(),
            None => project_phases(&self.projector, &dc, self.config.lifting)?.0,
        };
        let mut m = magnitude_update_step(
            &state.magnitude,
            &phases,
            &dc,
            &self.weights,
            self.config.beta,
            self.config.eta,
        )?;
        for (v, &inside) in m.as_mut_slice().iter_mut().zip(&self.support) {
            if !inside {
                *v = 0.0;
            }
        }
        let change = relative_change(&state.magnitude, &m);
        let mut history = state.history.clone();
        history.push(change);
        Ok((
            ReconState {
                magnitude: m,
                phases,
                shot_images: dc,
                iteration: state.iteration + 1,
                history,
            },
            residuals.iter().sum(),
        ))
    }
}

pub fn pair_reconstruct_with(
    acq: &AcquisitionSet,
    coils: &CoilMapSet,
    config: &ReconConfig,
    weights: WeightSource,
    options: &PairOptions,
) -> Result<ReconResult> {
    config.validate()?;
    let (n, m) = acq.shape();
    let engine = Engine::new(acq, coils, config.lambda)?;
    let support = engine.support();
    let run = PairRun {
        projector: projector_for(config, n, m)?,
        weights: resolve_weights(weights, config, (n, m))?,
        config,
        support,
        fixed: options.fixed_phases.clone(),
        engine,
    };
    if let Some(p) = &run.fixed {
        check_fixed_phases(p, acq)?;
    }
    let mut state = match &options.initial {
        Some(s) => s.clone(),
        None => init_from(&run.engine),
    };
    if let Some(p) = &run.fixed {
        state.phases = p.clone();
    }
    let data_energy = run.engine.data_energy().max(f64::MIN_POSITIVE);
    let start = Instant::now();
    let mut trace = Vec::new();
    let mut stop = StopReason::MaxIters;
    for k in 0..config.max_iters {
        let (next, residual) = run.step(&state)?;
        let change = *next.history.last().expect("step records a change");
        trace.push(TraceEntry {
            iteration: k + 1,
            relative_change: change,
            data_residual: residual / data_energy,
            elapsed_secs: start.elapsed().as_secs_f64(),
        });
        let blown = residual / data_energy > config.divergence_limit;
        if !change.is_finite() || change > config.divergence_limit || blown || !next.magnitude.as_slice().iter().all(|v| v.is_finite()) {
            return Err(Error::Diverged {
                iteration: k + 1,
                relative_change: change,
            });
        }
        state = next;
        if change < config.tol {
            stop = StopReason::Converged;
            break;
        }
    }
    Ok(ReconResult {
        magnitude: state.magnitude,
        phases: state.phases,
        iterations: trace.len(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        trace,
        config: config.clone(),
        stop,
    })
}

fn check_fixed_phases(p: &ShotPhaseSet, acq: &AcquisitionSet) -> Result<()> {
    if p.shots() != acq.shots() {
        return Err(Error::CountMismatch {
            what: "fixed phases",
            expected: acq.shots(),
            found: p.shots(),
        });
    }
    check_shape(acq.shape(), p.shape())
}

/// Applies exactly one PAIR iteration to `state`.
pub fn pair_iteration(
    acq: &AcquisitionSet,
    coils: &CoilMapSet,
    config: &ReconConfig,
    weights: WeightSource,
    state: &ReconState,
) -> Result<ReconState> {
    config.validate()?;
    let (n, m) = acq.shape();
    let engine = Engine::new(acq, coils, config.lambda)?;
    let support = engine.support();
    let run = PairRun {
        projector: projector_for(config, n, m)?,
        weights: resolve_weights(weights, config, (n, m))?,
        config,
        support,
        fixed: None,
        engine,
    };
    Ok(run.step(state)?.0)
}

/// Implicit-phase baseline: each shot image is made data-consistent and
/// low-rank projected on its own; the magnitude is the root-mean-square
/// over shots.
pub fn plrhm_reconstruct(acq: &AcquisitionSet, coils: &CoilMapSet, config: &ReconConfig) -> Result<ReconResult> {
    config.validate()?;
    let (n, m) = acq.shape();
    let engine = Engine::new(acq, coils, config.lambda)?;
    let projector = projector_for(config, n, m)?;
    let data_energy = engine.data_energy().max(f64::MIN_POSITIVE);
    let init = init_from(&engine);
    // start each shot at the density-compensated zero-filled estimate
    let mut images = shot_products(&init.magnitude, &init.phases);
    let mut magnitude = rms(&images);
    let start = Instant::now();
    let mut trace = Vec::new();
    let mut stop = StopReason::MaxIters;
    for k in 0..config.max_iters {
        let (dc, residuals): (Vec<ComplexGrid>, Vec<f64>) = images
            .par_iter()
            .enumerate()
            .map(|(j, x)| engine.consistency(j, x))
            .unzip();
        let projected = projector.project_shots(&dc, LiftingMode::PerShot)?;
        let next = rms(&projected);
        let change = relative_change(&magnitude, &next);
        trace.push(TraceEntry {
            iteration: k + 1,
            relative_change: change,
            data_residual: residuals.iter().sum::<f64>() / data_energy,
            elapsed_secs: start.elapsed().as_secs_f64(),
        });
        let blown = trace.last().is_some_and(|e: &TraceEntry| e.data_residual > config.divergence_limit);
        if !change.is_finite() || change > config.divergence_limit || blown {
            return Err(Error::Diverged {
                iteration: k + 1,
                relative_change: change,
            });
        }
        images = projected;
        magnitude = next;
        if change < config.tol {
            stop = StopReason::Converged;
            break;
        }
    }
    let phases = ShotPhaseSet::from_images(&images)?;
    Ok(ReconResult {
        magnitude,
        phases,
        iterations: trace.len(),
        wall_time_secs: start.elapsed().as_secs_f64(),
        trace,
        config: config.clone(),
        stop,
    })
}

/// `sqrt(mean_j |I_j|²)` per pixel.
fn rms(images: &[ComplexGrid]) -> RealImage {
    let (n, m) = images[0].shape();
    let mut acc = RealImage::zeros(n, m);
    for img in images {
        for (a, z) in acc.as_mut_slice().iter_mut().zip(img.as_slice()) {
            *a += z.norm_sqr();
        }
    }
    let inv = 1.0 / images.len() as f64;
    acc.map(|v| (v * inv).sqrt())
}

/// Per-shot complex images `P_j ⊙ m` of a finished reconstruction.
pub fn shot_images(result: &ReconResult) -> Vec<ComplexGrid> {
    shot_products(&result.magnitude, &result.phases)
}
