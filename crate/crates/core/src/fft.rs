//! Unitary 2-D DFT with the DC sample centered.
//!
//! `forward(x) = fftshift(fft2(ifftshift(x))) / sqrt(N*M)`, so the inverse
//! is also the adjoint.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::grid::{ComplexGrid, Domain};

#[derive(Clone)]
pub struct CenteredFft {
    rows: usize,
    cols: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

impl std::fmt::Debug for CenteredFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CenteredFft")
            .field("rows", &self.rows)
            .field("cols", &self.cols)
            .finish()
    }
}

impl CenteredFft {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        // row transforms run along the contiguous column index
        let row_fwd = planner.plan_fft_forward(cols);
        let row_inv = planner.plan_fft_inverse(cols);
        let col_fwd = planner.plan_fft_forward(rows);
        let col_inv = planner.plan_fft_inverse(rows);
        let scratch_len = [&row_fwd, &row_inv, &col_fwd, &col_inv]
            .iter()
            .map(|p| p.get_inplace_scratch_len())
            .max()
            .unwrap_or(0);
        Self {
            rows,
            cols,
            row_fwd,
            row_inv,
            col_fwd,
            col_inv,
            scratch_len,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Image -> centered k-space.
    pub fn forward(&self, image: &ComplexGrid) -> ComplexGrid {
        assert_eq!(image.shape(), self.shape(), "fft plan shape mismatch");
        let mut out = ComplexGrid::zeros(self.rows, self.cols, Domain::Kspace);
        self.transform(image.as_slice(), out.as_mut_slice(), false);
        out
    }

    /// Centered k-space -> image.
    pub fn inverse(&self, kspace: &ComplexGrid) -> ComplexGrid {
        assert_eq!(kspace.shape(), self.shape(), "fft plan shape mismatch");
        let mut out = ComplexGrid::zeros(self.rows, self.cols, Domain::Image);
        self.transform(kspace.as_slice(), out.as_mut_slice(), true);
        out
    }

    /// Slice-level transform; `output` must have `rows * cols` entries.
    pub fn transform(&self, input: &[Complex64], output: &mut [Complex64], inverse: bool) {
        let (n, m) = (self.rows, self.cols);
        let (hn, hm) = (n / 2, m / 2);
        let mut scratch = vec![Complex64::default(); self.scratch_len];

        // ifftshift while copying
        let mut buf = vec![Complex64::default(); n * m];
        for r in 0..n {
            let src_r = (r + hn) % n;
            let src = &input[src_r * m..(src_r + 1) * m];
            let dst = &mut buf[r * m..(r + 1) * m];
            dst[..m - hm].copy_from_slice(&src[hm..]);
            dst[m - hm..].copy_from_slice(&src[..hm]);
        }
        let (row_plan, col_plan) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        row_plan.process_with_scratch(&mut buf, &mut scratch);

        let mut tr = vec![Complex64::default(); n * m];
        for r in 0..n {
            for c in 0..m {
                tr[c * n + r] = buf[r * m + c];
            }
        }
        col_plan.process_with_scratch(&mut tr, &mut scratch);

        // fftshift and transpose back, applying the unitary scale
        let scale = 1.0 / ((n * m) as f64).sqrt();
        for r in 0..n {
            let src_r = (r + n - hn) % n;
            for c in 0..m {
                let src_c = (c + m - hm) % m;
                output[r * m + c] = tr[src_c * n + src_r] * scale;
            }
        }
    }
}

/// One-off centered unitary DFT (image -> k-space).
pub fn dft_centered(image: &ComplexGrid) -> ComplexGrid {
    CenteredFft::new(image.rows(), image.cols()).forward(image)
}

/// One-off centered unitary inverse DFT (k-space -> image).
pub fn idft_centered(kspace: &ComplexGrid) -> ComplexGrid {
    CenteredFft::new(kspace.rows(), kspace.cols()).inverse(kspace)
}
