//! FFT plumbing for Fourier multipliers on the periodic grid.

use nalgebra::DMatrix;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::grid::Grid;

fn fft_in_place(grid: &Grid, data: &mut [Complex64], inverse: bool) {
    let n = grid.points_per_dim();
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    // last axis is contiguous
    for row in data.chunks_exact_mut(n) {
        fft.process(row);
    }
    if grid.dim() == 2 {
        let mut column = vec![Complex64::new(0.0, 0.0); n];
        for j in 0..n {
            for i in 0..n {
                column[i] = data[i * n + j];
            }
            fft.process(&mut column);
            for i in 0..n {
                data[i * n + j] = column[i];
            }
        }
    }
}

/// Unnormalized forward DFT of a real grid function.
pub fn forward(grid: &Grid, values: &[f64]) -> Vec<Complex64> {
    let mut data: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_in_place(grid, &mut data, false);
    data
}

/// Normalized inverse DFT, keeping the real part.
pub fn inverse_real(grid: &Grid, mut data: Vec<Complex64>) -> Vec<f64> {
    fft_in_place(grid, &mut data, true);
    let scale = 1.0 / grid.len() as f64;
    data.iter().map(|c| c.re * scale).collect()
}

/// Tabulate a symbol over the wavenumber lattice in FFT layout. The closure
/// receives `(k0, k1)`, with `k1 = 0` in one dimension, and the per-axis
/// flags telling whether the bin is the unpaired Nyquist mode.
pub fn tabulate<T>(grid: &Grid, f: impl Fn([f64; 2], [bool; 2]) -> T) -> Vec<T> {
    let k = grid.wavenumbers();
    let nyq = grid.points_per_dim() / 2;
    (0..grid.len())
        .map(|idx| {
            let mi = grid.multi_index(idx);
            let mut kv = [0.0; 2];
            let mut ny = [false; 2];
            for axis in 0..grid.dim() {
                kv[axis] = k[mi[axis]];
                ny[axis] = mi[axis] == nyq;
            }
            f(kv, ny)
        })
        .collect()
}

pub fn apply_real_symbol(grid: &Grid, symbol: &[f64], values: &[f64]) -> Vec<f64> {
    let mut spec = forward(grid, values);
    for (c, m) in spec.iter_mut().zip(symbol) {
        *c *= *m;
    }
    inverse_real(grid, spec)
}

pub fn apply_complex_symbol(grid: &Grid, symbol: &[Complex64], values: &[f64]) -> Vec<f64> {
    let mut spec = forward(grid, values);
    for (c, m) in spec.iter_mut().zip(symbol) {
        *c *= *m;
    }
    inverse_real(grid, spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parity {
    Even,
    Odd,
}

fn negated(grid: &Grid, idx: usize) -> usize {
    let n = grid.points_per_dim();
    let mi = grid.multi_index(idx);
    grid.flat_index([(n - mi[0]) % n, (n - mi[1]) % n])
}

/// Convolution kernel `c = IDFT(symbol)` of a multiplier, so that the
/// operator acts as `(A u)_i = Σ_j c[i - j] u_j`. The kernel is
/// (anti)symmetrized according to the symbol's parity, which makes the
/// assembled matrices exactly (skew-)symmetric.
pub fn convolution_kernel(grid: &Grid, symbol: &[Complex64], parity: Parity) -> Vec<f64> {
    let c = inverse_real(grid, symbol.to_vec());
    (0..c.len())
        .map(|i| {
            let j = negated(grid, i);
            match parity {
                Parity::Even => 0.5 * (c[i] + c[j]),
                Parity::Odd => 0.5 * (c[i] - c[j]),
            }
        })
        .collect()
}

/// Rows/cols block of the circulant matrix generated by `kernel`.
pub fn circulant_block(grid: &Grid, kernel: &[f64], rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    let n = grid.points_per_dim();
    let rmi: Vec<[usize; 2]> = rows.iter().map(|&r| grid.multi_index(r)).collect();
    let cmi: Vec<[usize; 2]> = cols.iter().map(|&c| grid.multi_index(c)).collect();
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| {
        let (ra, cb) = (rmi[a], cmi[b]);
        let d = grid.flat_index([(ra[0] + n - cb[0]) % n, (ra[1] + n - cb[1]) % n]);
        kernel[d]
    })
}
