#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use pair_core::grid::{ComplexGrid, Domain, RealImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::f64::consts::PI;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn gaussian_like(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(-1.0..1.0)
}

pub fn random_grid(rng: &mut ChaCha8Rng, n: usize, m: usize, domain: Domain) -> ComplexGrid {
    ComplexGrid::from_fn(n, m, domain, |_, _| {
        Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

pub fn random_image(rng: &mut ChaCha8Rng, n: usize, m: usize) -> RealImage {
    RealImage::from_fn(n, m, |_, _| rng.random_range(0.0..1.0))
}

pub fn random_phase(rng: &mut ChaCha8Rng, n: usize, m: usize) -> ComplexGrid {
    ComplexGrid::from_fn(n, m, Domain::Image, |_, _| {
        Complex64::from_polar(1.0, rng.random_range(-PI..PI))
    })
}

/// Centered unitary DFT matrix from its defining sum, acting on row-major
/// vectors: `X(u, v) = sum x(r, c) e^{-2πi((u-u0)(r-r0)/N + (v-v0)(c-c0)/M)} / sqrt(NM)`.
pub fn dense_dft(n: usize, m: usize) -> DMatrix<Complex64> {
    let (r0, c0) = ((n / 2) as f64, (m / 2) as f64);
    let scale = 1.0 / ((n * m) as f64).sqrt();
    DMatrix::from_fn(n * m, n * m, |out, inp| {
        let (u, v) = ((out / m) as f64 - r0, (out % m) as f64 - c0);
        let (r, c) = ((inp / m) as f64 - r0, (inp % m) as f64 - c0);
        let angle = -2.0 * PI * (u * r / n as f64 + v * c / m as f64);
        Complex64::from_polar(scale, angle)
    })
}

pub fn to_vec(g: &ComplexGrid) -> nalgebra::DVector<Complex64> {
    nalgebra::DVector::from_column_slice(g.as_slice())
}

pub fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn max_abs_diff_real(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Real inner product `Re <a, b>` of complex grids.
pub fn real_inner(a: &ComplexGrid, b: &ComplexGrid) -> f64 {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x.conj() * y).re).sum()
}
