//! Discrete fractional operators.
//!
//! Two discretizations of `(-Δ)^s` are provided:
//!
//! * **spectral**: the Fourier multiplier `|k|^{2s}` applied through the FFT,
//!   exact on the torus for every order `s >= 0`;
//! * **kernel**: the singular-integral form with weights
//!   `W(x, y) = C_{n,s} h^n / |x - y|^{n+2s}` (periodic minimum-image
//!   distance) and `(K u)(x) = Σ_y W(x, y) (u(x) - u(y))`, for `0 < s < 1`.
//!
//! The kernel flavor is the one whose symmetric double sum makes the
//! fractional-gradient pairing and the conductivity identities exact on the
//! grid.

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::grid::{same_grid, Field, Grid};
use crate::spectral::{self, Parity};
use crate::DENSE_DOF_CAP;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Flavor {
    Spectral,
    Kernel,
}

impl Flavor {
    pub fn name(&self) -> &'static str {
        match self {
            Flavor::Spectral => "spectral",
            Flavor::Kernel => "kernel",
        }
    }
}

/// Normalization constant of the fractional Laplacian,
/// `C_{n,s} = s 4^s Γ(n/2 + s) / (π^{n/2} Γ(1 - s))`.
pub fn frac_constant(n: usize, s: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid("s", format!("must lie in (0, 1), got {s}")));
    }
    if n == 0 {
        return Err(invalid("n", "dimension must be positive"));
    }
    let half_n = n as f64 / 2.0;
    Ok(s * 4f64.powf(s) * gamma(half_n + s)
        / (std::f64::consts::PI.powf(half_n) * gamma(1.0 - s)))
}

#[derive(Debug, Clone)]
enum Repr {
    Spectral {
        symbol: Vec<f64>,
        half_symbol: Vec<f64>,
        // IDFT of `symbol`, the first column of the circulant operator
        conv: Vec<f64>,
    },
    Kernel {
        // W indexed by the flat index of the periodic offset x - y
        offsets: Vec<f64>,
        row_sum: f64,
    },
}

/// Assembled discrete fractional Laplacian `(-Δ)^s` of a given flavor.
#[derive(Debug, Clone)]
pub struct OperatorKernel {
    grid: Grid,
    order: f64,
    repr: Repr,
}

/// `|k|^{2s}` in FFT layout, with the convention `|k|^0 = 1` (identity).
pub(crate) fn power_symbol(grid: &Grid, exponent: f64) -> Vec<f64> {
    spectral::tabulate(grid, |k, _| {
        if exponent == 0.0 {
            1.0
        } else {
            (k[0] * k[0] + k[1] * k[1]).sqrt().powf(exponent)
        }
    })
}

impl OperatorKernel {
    pub fn new(grid: Grid, s: f64, flavor: Flavor) -> Result<Self> {
        match flavor {
            Flavor::Spectral => Self::spectral(grid, s),
            Flavor::Kernel => Self::kernel(grid, s),
        }
    }

    /// Fourier-multiplier operator of order `s >= 0`.
    pub fn spectral(grid: Grid, s: f64) -> Result<Self> {
        if !(s.is_finite() && s >= 0.0) {
            return Err(invalid("s", format!("must be finite and >= 0, got {s}")));
        }
        let symbol = power_symbol(&grid, 2.0 * s);
        let half_symbol = power_symbol(&grid, s);
        let csym: Vec<Complex64> = symbol.iter().map(|&m| Complex64::new(m, 0.0)).collect();
        let conv = spectral::convolution_kernel(&grid, &csym, Parity::Even);
        Ok(Self {
            grid,
            order: s,
            repr: Repr::Spectral {
                symbol,
                half_symbol,
                conv,
            },
        })
    }

    /// Singular-kernel operator of order `0 < s < 1`.
    pub fn kernel(grid: Grid, s: f64) -> Result<Self> {
        let c = frac_constant(grid.dim(), s)?;
        let n = grid.dim() as f64;
        let h = grid.cell_volume();
        let offsets: Vec<f64> = (0..grid.len())
            .map(|d| {
                if d == 0 {
                    0.0
                } else {
                    // distance from the origin to offset d is the min-image distance
                    let r = grid.periodic_distance(d, 0);
                    c * h / r.powf(n + 2.0 * s)
                }
            })
            .collect();
        let row_sum = offsets.iter().sum();
        Ok(Self {
            grid,
            order: s,
            repr: Repr::Kernel { offsets, row_sum },
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn flavor(&self) -> Flavor {
        match self.repr {
            Repr::Spectral { .. } => Flavor::Spectral,
            Repr::Kernel { .. } => Flavor::Kernel,
        }
    }

    /// Multiplier `|k|^{2s}` in FFT layout (spectral flavor only).
    pub fn symbol(&self) -> Option<&[f64]> {
        match &self.repr {
            Repr::Spectral { symbol, .. } => Some(symbol),
            Repr::Kernel { .. } => None,
        }
    }

    #[inline]
    fn offset_index(&self, a: usize, b: usize) -> usize {
        let n = self.grid.points_per_dim();
        let (ma, mb) = (self.grid.multi_index(a), self.grid.multi_index(b));
        self.grid
            .flat_index([(ma[0] + n - mb[0]) % n, (ma[1] + n - mb[1]) % n])
    }

    /// Off-diagonal kernel weight `W(a, b)`; zero on the diagonal.
    pub fn weight(&self, a: usize, b: usize) -> Option<f64> {
        match &self.repr {
            Repr::Kernel { offsets, .. } => Some(offsets[self.offset_index(a, b)]),
            Repr::Spectral { .. } => None,
        }
    }

    pub(crate) fn kernel_offsets(&self) -> Result<&[f64]> {
        match &self.repr {
            Repr::Kernel { offsets, .. } => Ok(offsets),
            Repr::Spectral { .. } => Err(Error::FlavorMismatch { expected: "kernel" }),
        }
    }

    /// Dense weight matrix `W` (kernel flavor).
    pub fn weight_matrix(&self) -> Result<DMatrix<f64>> {
        check_dense(&self.grid)?;
        let offsets = self.kernel_offsets()?;
        let len = self.grid.len();
        Ok(DMatrix::from_fn(len, len, |a, b| offsets[self.offset_index(a, b)]))
    }

    /// Apply the full-order operator.
    pub fn apply(&self, u: &Field) -> Result<Field> {
        if *u.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        match &self.repr {
            Repr::Spectral { symbol, .. } => {
                Field::new(self.grid, spectral::apply_real_symbol(&self.grid, symbol, u.values()))
            }
            Repr::Kernel { offsets, .. } => {
                let uv = u.values();
                let out: Vec<f64> = (0..uv.len())
                    .into_par_iter()
                    .map(|x| {
                        let mut acc = 0.0;
                        for (y, &uy) in uv.iter().enumerate() {
                            acc += offsets[self.offset_index(x, y)] * (uv[x] - uy);
                        }
                        acc
                    })
                    .collect();
                Field::new(self.grid, out)
            }
        }
    }

    /// Rows/cols block of the operator matrix.
    pub fn restricted_matrix(&self, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
        match &self.repr {
            Repr::Spectral { conv, .. } => spectral::circulant_block(&self.grid, conv, rows, cols),
            Repr::Kernel { offsets, row_sum } => DMatrix::from_fn(rows.len(), cols.len(), |a, b| {
                let (ra, cb) = (rows[a], cols[b]);
                if ra == cb {
                    *row_sum
                } else {
                    -offsets[self.offset_index(ra, cb)]
                }
            }),
        }
    }

    /// Full operator matrix, `(K u)_i = Σ_j K_ij u_j`.
    pub fn matrix(&self) -> Result<DMatrix<f64>> {
        check_dense(&self.grid)?;
        let all: Vec<usize> = (0..self.grid.len()).collect();
        Ok(self.restricted_matrix(&all, &all))
    }
}

pub(crate) fn check_dense(grid: &Grid) -> Result<()> {
    if grid.len() > DENSE_DOF_CAP {
        return Err(Error::ResourceLimit(format!(
            "{} grid points exceed the dense cap of {DENSE_DOF_CAP}",
            grid.len()
        )));
    }
    Ok(())
}

/// Apply `(-Δ)^s`, or `(-Δ)^{s/2}` when `half` is set (spectral flavor only).
pub fn frac_laplacian(kernel: &OperatorKernel, u: &Field, half: bool) -> Result<Field> {
    if !half {
        return kernel.apply(u);
    }
    match &kernel.repr {
        Repr::Spectral { half_symbol, .. } => {
            if *u.grid() != kernel.grid {
                return Err(Error::GridMismatch);
            }
            Field::new(
                kernel.grid,
                spectral::apply_real_symbol(&kernel.grid, half_symbol, u.values()),
            )
        }
        Repr::Kernel { .. } => Err(Error::FlavorMismatch {
            expected: "spectral",
        }),
    }
}

/// Discrete Dirichlet energy `(h^n / 2) Σ_{x,y} W(x,y) (u(x)-u(y)) (v(x)-v(y))`,
/// the grid version of `<∇^s u, ∇^s v>`.
pub fn frac_gradient_pairing(kernel: &OperatorKernel, u: &Field, v: &Field) -> Result<f64> {
    let offsets = kernel.kernel_offsets()?;
    same_grid(u, v)?;
    if *u.grid() != kernel.grid {
        return Err(Error::GridMismatch);
    }
    let (uv, vv) = (u.values(), v.values());
    let rows: Vec<f64> = (0..uv.len())
        .into_par_iter()
        .map(|x| {
            let mut acc = 0.0;
            for y in 0..uv.len() {
                acc += offsets[kernel.offset_index(x, y)] * (uv[x] - uv[y]) * (vv[x] - vv[y]);
            }
            acc
        })
        .collect();
    Ok(0.5 * kernel.grid.cell_volume() * rows.iter().sum::<f64>())
}

/// Normalized Gagliardo seminorm
/// `((C/2) Σ_{x≠y} |u(x)-u(y)|^p / |x-y|^{n+sp} h^{2n})^{1/p}`
/// with `C = C_{n,s}` for `p = 2` and `C = 1` otherwise.
pub fn gagliardo_seminorm(grid: &Grid, u: &Field, s: f64, p: f64) -> Result<f64> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid("s", format!("must lie in (0, 1), got {s}")));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(invalid("p", format!("must lie in (1, ∞), got {p}")));
    }
    if u.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let c = gagliardo_normalization(grid.dim(), s, p)?;
    let weights = gagliardo_offsets(grid, s, p);
    let uv = u.values();
    let n = grid.points_per_dim();
    let rows: Vec<f64> = (0..uv.len())
        .into_par_iter()
        .map(|x| {
            let mx = grid.multi_index(x);
            let mut acc = 0.0;
            for y in 0..uv.len() {
                let my = grid.multi_index(y);
                let d = grid.flat_index([(mx[0] + n - my[0]) % n, (mx[1] + n - my[1]) % n]);
                acc += weights[d] * (uv[x] - uv[y]).abs().powf(p);
            }
            acc
        })
        .collect();
    let h2n = grid.cell_volume() * grid.cell_volume();
    Ok((0.5 * c * h2n * rows.iter().sum::<f64>()).powf(1.0 / p))
}

pub(crate) fn gagliardo_normalization(n: usize, s: f64, p: f64) -> Result<f64> {
    if p == 2.0 {
        frac_constant(n, s)
    } else {
        Ok(1.0)
    }
}

/// `1 / |d|^{n+sp}` per periodic offset, zero at the origin.
pub(crate) fn gagliardo_offsets(grid: &Grid, s: f64, p: f64) -> Vec<f64> {
    let n = grid.dim() as f64;
    (0..grid.len())
        .map(|d| {
            if d == 0 {
                0.0
            } else {
                grid.periodic_distance(d, 0).powf(-(n + s * p))
            }
        })
        .collect()
}

/// Bessel potential `<D>^s` with multiplier `(1 + |k|^2)^{s/2}`.
#[derive(Debug, Clone)]
pub struct BesselMultiplier {
    grid: Grid,
    order: f64,
    symbol: Vec<f64>,
}

impl BesselMultiplier {
    pub fn new(grid: Grid, s: f64) -> Result<Self> {
        if !s.is_finite() {
            return Err(invalid("s", "must be finite"));
        }
        Ok(Self {
            grid,
            order: s,
            symbol: bessel_symbol(&grid, s),
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn symbol(&self) -> &[f64] {
        &self.symbol
    }

    pub fn apply(&self, u: &Field) -> Result<Field> {
        if *u.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        Field::new(
            self.grid,
            spectral::apply_real_symbol(&self.grid, &self.symbol, u.values()),
        )
    }

    /// Gram matrix of the discrete `H^s` inner product restricted to
    /// `indices`: `h^n` times the circulant of `<k>^{2s}`.
    pub fn gram_matrix(&self, indices: &[usize]) -> DMatrix<f64> {
        let sym = bessel_symbol(&self.grid, 2.0 * self.order);
        let csym: Vec<Complex64> = sym.iter().map(|&m| Complex64::new(m, 0.0)).collect();
        let conv = spectral::convolution_kernel(&self.grid, &csym, Parity::Even);
        spectral::circulant_block(&self.grid, &conv, indices, indices) * self.grid.cell_volume()
    }
}

pub(crate) fn bessel_symbol(grid: &Grid, s: f64) -> Vec<f64> {
    spectral::tabulate(grid, |k, _| (1.0 + k[0] * k[0] + k[1] * k[1]).powf(0.5 * s))
}

/// Discrete `H^s` norm `‖<D>^s u‖_{L²}`.
pub fn sobolev_norm(bessel: &BesselMultiplier, u: &Field) -> Result<f64> {
    Ok(bessel.apply(u)?.l2_norm())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{inner, make_grid};
    use std::f64::consts::PI;

    /// Composite Simpson rule on `[a, b]` with `n` (even) panels.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut acc = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            acc += w * f(a + i as f64 * h);
        }
        acc * h / 3.0
    }

    /// `∫_R (1 - cos x) / |x|^{1+2s} dx` by series on [0,1], Simpson on
    /// [1, 2πM] and an integration-by-parts tail.
    fn one_dim_integral(s: f64) -> f64 {
        let mut head = 0.0;
        let mut fact = 1.0;
        for k in 1..30 {
            fact *= (2 * k - 1) as f64 * (2 * k) as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            head += sign / (fact * (2.0 * k as f64 - 2.0 * s));
        }
        let x_max = 2.0 * PI * 400.0;
        let panels = ((x_max - 1.0) / 0.005) as usize / 2 * 2;
        let osc = simpson(|x| x.cos() * x.powf(-1.0 - 2.0 * s), 1.0, x_max, panels);
        let tail_cos = (1.0 + 2.0 * s) * x_max.powf(-2.0 - 2.0 * s);
        let tail = 1.0 / (2.0 * s) - osc - tail_cos;
        2.0 * (head + tail)
    }

    fn quadrature_constant(n: usize, s: f64) -> f64 {
        let one_d = one_dim_integral(s);
        match n {
            1 => 1.0 / one_d,
            2 => {
                // Fubini over the second coordinate, x2 = |x1| tan φ
                let angular = simpson(|phi| phi.cos().powf(2.0 * s), -PI / 2.0, PI / 2.0, 2_000_000);
                1.0 / (one_d * angular)
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn constant_matches_quadrature_oracle() {
        assert!((frac_constant(1, 0.5).unwrap() - 1.0 / PI).abs() < 1e-12);
        for &(n, s) in &[(1, 0.5), (1, 0.25), (1, 0.75), (2, 0.5), (2, 0.3), (2, 0.8)] {
            let closed = frac_constant(n, s).unwrap();
            let oracle = quadrature_constant(n, s);
            assert!(
                ((closed - oracle) / oracle).abs() < 1e-6,
                "n={n} s={s}: closed {closed} vs quadrature {oracle}"
            );
        }
    }

    #[test]
    fn constant_rejects_out_of_range() {
        assert!(frac_constant(1, 1.0).is_err());
        assert!(frac_constant(1, 0.0).is_err());
    }

    #[test]
    fn plane_wave_spectral() {
        let g = make_grid(1, 2.0 * PI, 64).unwrap();
        let k = OperatorKernel::spectral(g, 0.5).unwrap();
        let u = Field::from_fn(g, |p| (3.0 * p[0]).cos()).unwrap();
        let v = frac_laplacian(&k, &u, false).unwrap();
        for (a, b) in v.values().iter().zip(u.values()) {
            assert!((a - 3.0 * b).abs() < 1e-12);
        }
        let half = frac_laplacian(&k, &u, true).unwrap();
        for (a, b) in half.values().iter().zip(u.values()) {
            assert!((a - 3f64.sqrt() * b).abs() < 1e-12);
        }
    }

    #[test]
    fn constants_are_annihilated() {
        let g = make_grid(1, 8.0, 64).unwrap();
        let one = Field::constant(g, 2.5);
        for flavor in [Flavor::Spectral, Flavor::Kernel] {
            let k = OperatorKernel::new(g, 0.4, flavor).unwrap();
            assert!(k.apply(&one).unwrap().max_abs() < 1e-12);
        }
    }

    #[test]
    fn half_order_needs_spectral() {
        let g = make_grid(1, 8.0, 16).unwrap();
        let k = OperatorKernel::kernel(g, 0.4).unwrap();
        assert!(matches!(
            frac_laplacian(&k, &Field::zeros(g), true),
            Err(Error::FlavorMismatch { .. })
        ));
    }

    #[test]
    fn kernel_matrix_structure() {
        let g = make_grid(2, 4.0, 8).unwrap();
        let k = OperatorKernel::kernel(g, 0.3).unwrap();
        let w = k.weight_matrix().unwrap();
        assert_eq!(w, w.transpose());
        assert!(w.iter().all(|&x| x >= 0.0));
        let m = k.matrix().unwrap();
        for row in m.row_iter() {
            assert!(row.sum().abs() < 1e-12 * k.restricted_matrix(&[0], &[0])[(0, 0)]);
        }
    }

    #[test]
    fn pairing_special_cases() {
        let g = make_grid(1, 8.0, 32).unwrap();
        let k = OperatorKernel::kernel(g, 0.6).unwrap();
        let v = Field::from_fn(g, |p| (p[0] * 1.3).sin() + p[0] * 0.1).unwrap();
        assert_eq!(
            frac_gradient_pairing(&k, &Field::constant(g, 1.0), &v).unwrap(),
            0.0
        );
        let sk = OperatorKernel::spectral(g, 0.6).unwrap();
        assert!(frac_gradient_pairing(&sk, &v, &v).is_err());
        let lhs = frac_gradient_pairing(&k, &v, &v).unwrap();
        let rhs = inner(&k.apply(&v).unwrap(), &v).unwrap();
        assert!((lhs - rhs).abs() <= 1e-12 * lhs.abs());
    }

    #[test]
    fn seminorm_properties() {
        let g = make_grid(1, 8.0, 32).unwrap();
        let u = Field::from_fn(g, |p| (-p[0] * p[0]).exp()).unwrap();
        assert_eq!(
            gagliardo_seminorm(&g, &Field::constant(g, 3.0), 0.5, 2.0).unwrap(),
            0.0
        );
        for p in [1.5, 2.0, 3.0] {
            let a = gagliardo_seminorm(&g, &u, 0.5, p).unwrap();
            let b = gagliardo_seminorm(&g, &u.scaled(2.0), 0.5, p).unwrap();
            assert!((b - 2.0 * a).abs() < 1e-12 * a);
        }
        let k = OperatorKernel::kernel(g, 0.5).unwrap();
        let sq = gagliardo_seminorm(&g, &u, 0.5, 2.0).unwrap().powi(2);
        let e = frac_gradient_pairing(&k, &u, &u).unwrap();
        assert!((sq - e).abs() < 1e-12 * e);
        assert!(gagliardo_seminorm(&g, &u, 1.2, 2.0).is_err());
    }

    #[test]
    fn sobolev_norm_cases() {
        let g = make_grid(1, 8.0, 32).unwrap();
        let u = Field::from_fn(g, |p| (p[0] * 0.7).sin() + 0.2 * (3.0 * p[0]).cos()).unwrap();
        let b0 = BesselMultiplier::new(g, 0.0).unwrap();
        assert!((sobolev_norm(&b0, &u).unwrap() - u.l2_norm()).abs() < 1e-12);
        let c = Field::constant(g, -1.5);
        let b = BesselMultiplier::new(g, 0.7).unwrap();
        assert!((sobolev_norm(&b, &c).unwrap() - 1.5 * 8f64.sqrt()).abs() < 1e-12);
        let b1 = BesselMultiplier::new(g, 1.0).unwrap();
        let bh = BesselMultiplier::new(g, 0.5).unwrap();
        assert!(sobolev_norm(&b1, &u).unwrap() >= sobolev_norm(&bh, &u).unwrap());
        assert!(b.symbol().iter().all(|&m| m >= 1.0));
        assert_eq!(b.symbol()[0], 1.0);
    }
}
