use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Separable 2D FFT over a row-major `ny × nx` buffer.
///
/// The forward transform is unnormalized; the inverse divides by `nx·ny`.
#[derive(Clone)]
pub struct Fft2 {
    nx: usize,
    ny: usize,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for Fft2 {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Fft2").field("nx", &self.nx).field("ny", &self.ny).finish()
    }
}

impl Fft2 {
    pub fn new(nx: usize, ny: usize) -> Self {
        let mut planner = FftPlanner::new();
        Fft2 {
            nx,
            ny,
            row_fwd: planner.plan_fft_forward(nx),
            row_inv: planner.plan_fft_inverse(nx),
            col_fwd: planner.plan_fft_forward(ny),
            col_inv: planner.plan_fft_inverse(ny),
        }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, true);
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, false);
        let s = 1.0 / (self.nx * self.ny) as f64;
        data.iter_mut().for_each(|v| *v *= s);
    }

    fn run(&self, data: &mut [Complex64], forward: bool) {
        assert_eq!(data.len(), self.nx * self.ny);
        let (row, col) = if forward { (&self.row_fwd, &self.col_fwd) } else { (&self.row_inv, &self.col_inv) };
        row.process(data);
        let mut t = transpose(data, self.nx, self.ny);
        col.process(&mut t);
        let back = transpose(&t, self.ny, self.nx);
        data.copy_from_slice(&back);
    }
}

fn transpose(data: &[Complex64], nx: usize, ny: usize) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); data.len()];
    for j in 0..ny {
        for i in 0..nx {
            out[i * ny + j] = data[j * nx + i];
        }
    }
    out
}

/// Spatial frequency of FFT bin `k` for `n` samples at spacing `d` (cycles/µm).
pub(crate) fn fft_freq(k: usize, n: usize, d: f64) -> f64 {
    let k = if k <= (n - 1) / 2 { k as f64 } else { k as f64 - n as f64 };
    k / (n as f64 * d)
}
