//! Fractional Poincaré constants on interior-supported grid functions.
//!
//! `C_{t,s}(Ω) = sup ‖(-Δ)^{s/2} u‖ / ‖(-Δ)^{t/2} u‖` over fields vanishing
//! off Ω, computed from the pencil of the order-`t` and order-`s` Dirichlet
//! forms restricted to interior indices.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fracops::{gagliardo_normalization, gagliardo_offsets, Flavor, OperatorKernel};
use crate::grid::{make_grid, mask_from_predicate, DomainMask, Grid};
use crate::linalg::{generalized_symmetric_eigen, pencil_residual};
use crate::random::rng;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoincareEstimate {
    pub s: f64,
    pub t: f64,
    pub flavor: Flavor,
    pub constant: f64,
    /// Dimension of the dense pencil (number of interior points).
    pub pencil_size: usize,
    /// Relative residual of the extremal eigenpair.
    pub residual: f64,
}

/// `h^n K_r` on interior indices; order 0 is the `L²` Gram matrix.
fn order_block(grid: &Grid, r: f64, flavor: Flavor, idx: &[usize]) -> Result<DMatrix<f64>> {
    let h = grid.cell_volume();
    if r == 0.0 {
        return Ok(DMatrix::identity(idx.len(), idx.len()) * h);
    }
    let k = OperatorKernel::new(*grid, r, flavor)?;
    Ok(k.restricted_matrix(idx, idx) * h)
}

pub fn poincare_constant(mask: &DomainMask, s: f64, t: f64) -> Result<PoincareEstimate> {
    poincare_constant_with(mask, s, t, Flavor::Spectral)
}

/// Largest `√λ` of `B_s x = λ B_t x`, computed as `1/√μ_min` of the
/// reversed pencil so the Cholesky factor is taken of the lower-order form.
pub fn poincare_constant_with(
    mask: &DomainMask,
    s: f64,
    t: f64,
    flavor: Flavor,
) -> Result<PoincareEstimate> {
    if !(s >= 0.0 && t > 0.0 && s <= t && t.is_finite()) {
        return Err(invalid("s, t", format!("need 0 ≤ s ≤ t, t > 0; got s={s}, t={t}")));
    }
    let interior = mask.interior();
    if s == t {
        return Ok(PoincareEstimate {
            s,
            t,
            flavor,
            constant: 1.0,
            pencil_size: interior.len(),
            residual: 0.0,
        });
    }
    let grid = mask.grid();
    let b_s = order_block(grid, s, flavor, interior)?;
    let b_t = order_block(grid, t, flavor, interior)?;
    let eig = generalized_symmetric_eigen(&b_t, &b_s)?;
    let mu = eig.values[0];
    if mu <= 0.0 {
        return Err(Error::EigenFailure(format!(
            "order-{t} form is not positive on the interior (μ = {mu:e})"
        )));
    }
    let x: DVector<f64> = eig.vectors.column(0).into_owned();
    Ok(PoincareEstimate {
        s,
        t,
        flavor,
        constant: 1.0 / mu.sqrt(),
        pencil_size: interior.len(),
        residual: pencil_residual(&b_t, &b_s, mu, &x),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InterpolationReport {
    pub z: f64,
    pub r: f64,
    pub s: f64,
    pub t: f64,
    pub c_rz: f64,
    pub c_ts: f64,
    /// `C_{r,z}^{(t-s)/(r-z)}`.
    pub bound: f64,
    pub holds: bool,
}

pub const INTERPOLATION_TOL: f64 = 1e-3;

/// Check `C_{t,s} ≤ C_{r,z}^{(t-s)/(r-z)}` for admissible orderings
/// `t ≥ s ≥ r > z ≥ 0` or `t ≥ r ≥ s ≥ z ≥ 0` (with `r > z`).
pub fn interpolation_check(
    mask: &DomainMask,
    z: f64,
    r: f64,
    s: f64,
    t: f64,
) -> Result<InterpolationReport> {
    let ordered = r > z && z >= 0.0 && ((t >= s && s >= r) || (t >= r && r >= s && s >= z));
    if !ordered {
        return Err(invalid(
            "z, r, s, t",
            format!("ordering violated: z={z}, r={r}, s={s}, t={t}"),
        ));
    }
    let c_rz = poincare_constant(mask, z, r)?.constant;
    let c_ts = poincare_constant(mask, s, t)?.constant;
    let bound = c_rz.powf((t - s) / (r - z));
    Ok(InterpolationReport {
        z,
        r,
        s,
        t,
        c_rz,
        c_ts,
        bound,
        holds: c_ts <= bound * (1.0 + INTERPOLATION_TOL),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CylinderReport {
    pub s: f64,
    pub elongations: Vec<f64>,
    pub constants: Vec<f64>,
    pub section_constant: f64,
    /// `|C(Ω_A) - C(ω)| / C(ω)` at the largest elongation.
    pub relative_gap: f64,
    pub monotone: bool,
}

/// Largest dim-2 resolution the cylinder study assembles densely.
pub const CYLINDER_MAX_N: usize = 64;

/// `C(s, Ω_A)` for `Ω_A = (-A/2, A/2) × ω` against the 1-d `C(s, ω)` on a
/// grid with the same extent and resolution.
pub fn cylinder_limit(
    grid: &Grid,
    section: impl Fn(f64) -> bool + Sync,
    elongations: &[f64],
    s: f64,
) -> Result<CylinderReport> {
    if grid.dim() != 2 {
        return Err(invalid("grid", "cylinder study needs a 2-d grid"));
    }
    if grid.points_per_dim() > CYLINDER_MAX_N {
        return Err(Error::ResourceLimit(format!(
            "N = {} exceeds {CYLINDER_MAX_N} for the 2-d cylinder study",
            grid.points_per_dim()
        )));
    }
    if elongations.is_empty() || elongations.iter().any(|&a| !(a > 0.0)) {
        return Err(invalid("elongations", "need at least one positive length"));
    }
    let line = make_grid(1, grid.extent(), grid.points_per_dim())?;
    let section_mask = mask_from_predicate(line, |p| section(p[0]), &[])?;
    let section_constant = poincare_constant(&section_mask, 0.0, s)?.constant;
    let constants = elongations
        .par_iter()
        .map(|&a| {
            let m = mask_from_predicate(*grid, |p| p[0].abs() < a / 2.0 && section(p[1]), &[])?;
            Ok(poincare_constant(&m, 0.0, s)?.constant)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut order: Vec<usize> = (0..elongations.len()).collect();
    order.sort_by(|&i, &j| elongations[i].total_cmp(&elongations[j]));
    let monotone = order
        .windows(2)
        .all(|w| constants[w[0]] <= constants[w[1]] + 1e-8);
    let last = constants[*order.last().expect("nonempty")];
    Ok(CylinderReport {
        s,
        elongations: elongations.to_vec(),
        constants,
        section_constant,
        relative_gap: (last - section_constant).abs() / section_constant,
        monotone,
    })
}

/// Lattice-preserving rigid motions of the periodic grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Motion {
    Identity,
    /// Translation by whole cells per axis.
    Shift { cells: [i64; 2] },
    /// Translation by a physical vector, which must be a multiple of `h`.
    Translate { by: [f64; 2] },
    /// `(x_0, x_1) ↦ (x_1, x_0)`; 2-d only.
    AxisSwap,
    /// `x_axis ↦ -x_axis`.
    Reflect { axis: usize },
}

impl Motion {
    /// Image of every grid index under the motion.
    pub fn permutation(&self, grid: &Grid) -> Result<Vec<usize>> {
        let n = grid.points_per_dim();
        let dim = grid.dim();
        let cells = match *self {
            Motion::Shift { cells } => Some(cells),
            Motion::Translate { by } => {
                let mut cells = [0i64; 2];
                for axis in 0..dim {
                    let steps = by[axis] / grid.spacing();
                    if (steps - steps.round()).abs() > 1e-9 * steps.abs().max(1.0) {
                        return Err(Error::IncompatibleMotion(format!(
                            "translation {} is not a multiple of h = {}",
                            by[axis],
                            grid.spacing()
                        )));
                    }
                    cells[axis] = steps.round() as i64;
                }
                if dim == 1 && by[1] != 0.0 {
                    return Err(Error::IncompatibleMotion("second component in 1-d".into()));
                }
                Some(cells)
            }
            _ => None,
        };
        if let Some(c) = cells {
            if dim == 1 && c[1] != 0 {
                return Err(Error::IncompatibleMotion("second component in 1-d".into()));
            }
        }
        match *self {
            Motion::AxisSwap if dim != 2 => {
                return Err(Error::IncompatibleMotion("axis swap needs 2-d".into()))
            }
            Motion::Reflect { axis } if axis >= dim => {
                return Err(Error::IncompatibleMotion(format!("no axis {axis}")))
            }
            _ => {}
        }
        let ni = n as i64;
        Ok((0..grid.len())
            .map(|idx| {
                let mi = grid.multi_index(idx);
                let out = match *self {
                    Motion::Identity => mi,
                    Motion::Shift { .. } | Motion::Translate { .. } => {
                        let c = cells.expect("set above");
                        let mut o = mi;
                        for axis in 0..dim {
                            o[axis] = (mi[axis] as i64 + c[axis]).rem_euclid(ni) as usize;
                        }
                        o
                    }
                    Motion::AxisSwap => [mi[1], mi[0]],
                    Motion::Reflect { axis } => {
                        let mut o = mi;
                        o[axis] = (n - mi[axis]) % n;
                        o
                    }
                };
                grid.flat_index(out)
            })
            .collect())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct InvarianceReport {
    pub motion: Motion,
    pub original: f64,
    pub moved: f64,
    pub relative_difference: f64,
}

/// Poincaré constant of a mask and of its image under `motion`.
pub fn rigid_invariance_check(
    mask: &DomainMask,
    motion: Motion,
    s: f64,
    t: f64,
) -> Result<InvarianceReport> {
    let perm = motion.permutation(mask.grid())?;
    let moved_interior: Vec<usize> = mask.interior().iter().map(|&i| perm[i]).collect();
    let moved = DomainMask::from_indices(*mask.grid(), moved_interior, Default::default())?;
    let a = poincare_constant(mask, s, t)?.constant;
    let b = poincare_constant(&moved, s, t)?.constant;
    Ok(InvarianceReport {
        motion,
        original: a,
        moved: b,
        relative_difference: (a - b).abs() / a,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GagliardoEstimate {
    pub s: f64,
    pub p: f64,
    /// Best (smallest) quotient `[u]^p / ‖u‖_p^p` over trials.
    pub quotient: f64,
    pub per_trial: Vec<f64>,
    pub iterations: Vec<usize>,
}

/// Relative quotient change at which a descent run stops.
pub const GAGLIARDO_TOL: f64 = 1e-6;
const GAGLIARDO_MAX_ITER: usize = 20_000;

struct Quotient {
    p: f64,
    // scale (C/2) h^{2n} and the L^p weight h^n
    scale: f64,
    h: f64,
    // pair weights between interior points and tail sums to the exterior
    w: DMatrix<f64>,
    tail: Vec<f64>,
}

impl Quotient {
    fn value(&self, u: &[f64]) -> f64 {
        let (num, den) = self.parts(u);
        num / den
    }

    fn parts(&self, u: &[f64]) -> (f64, f64) {
        let p = self.p;
        let n = u.len();
        let mut num = 0.0;
        for x in 0..n {
            for y in 0..n {
                num += self.w[(x, y)] * (u[x] - u[y]).abs().powf(p);
            }
            num += 2.0 * self.tail[x] * u[x].abs().powf(p);
        }
        let den: f64 = u.iter().map(|v| v.abs().powf(p)).sum::<f64>() * self.h;
        (self.scale * num, den)
    }

    fn gradient(&self, u: &[f64]) -> (f64, Vec<f64>) {
        let p = self.p;
        let n = u.len();
        let (num, den) = self.parts(u);
        let q = num / den;
        let pow = |v: f64| v.signum() * v.abs().powf(p - 1.0);
        let grad = (0..n)
            .map(|x| {
                let mut g = 0.0;
                for y in 0..n {
                    g += 2.0 * p * self.w[(x, y)] * pow(u[x] - u[y]);
                }
                g += 2.0 * p * self.tail[x] * pow(u[x]);
                (self.scale * g - q * self.h * p * pow(u[x])) / den
            })
            .collect();
        (q, grad)
    }
}

fn normalize(u: &mut [f64], p: f64) {
    let norm = u.iter().map(|v| v.abs().powf(p)).sum::<f64>().powf(1.0 / p);
    if norm > 0.0 {
        u.iter_mut().for_each(|v| *v /= norm);
    }
}

fn descend(q: &Quotient, mut u: Vec<f64>) -> (f64, usize) {
    normalize(&mut u, q.p);
    let (mut val, mut grad) = q.gradient(&u);
    let mut eta = 1.0 / val.max(1e-300);
    for iter in 1..=GAGLIARDO_MAX_ITER {
        let g2: f64 = grad.iter().map(|g| g * g).sum();
        if g2 == 0.0 {
            return (val, iter);
        }
        let accepted = loop {
            let mut trial: Vec<f64> = u.iter().zip(&grad).map(|(a, g)| a - eta * g).collect();
            normalize(&mut trial, q.p);
            let tv = q.value(&trial);
            if tv.is_finite() && tv <= val - 1e-4 * eta * g2 {
                break Some((trial, tv));
            }
            eta *= 0.5;
            if eta < 1e-300 {
                break None;
            }
        };
        let Some((next, next_val)) = accepted else {
            return (val, iter);
        };
        let change = (val - next_val).abs() / val.abs();
        u = next;
        let (v, g) = q.gradient(&u);
        val = v;
        grad = g;
        eta *= 2.0;
        if change < GAGLIARDO_TOL {
            return (val, iter);
        }
    }
    (val, GAGLIARDO_MAX_ITER)
}

/// Minimize the normalized Gagliardo quotient over interior-supported
/// fields by projected gradient descent with step halving. Trial 0 starts
/// from the interior indicator, the rest from seeded random fields.
pub fn gagliardo_quotient(
    mask: &DomainMask,
    s: f64,
    p: f64,
    trials: usize,
    seed: u64,
) -> Result<GagliardoEstimate> {
    if !(s > 0.0 && s < 1.0) {
        return Err(invalid("s", format!("must lie in (0, 1), got {s}")));
    }
    if !(p > 1.0 && p.is_finite()) {
        return Err(invalid("p", format!("must lie in (1, ∞), got {p}")));
    }
    if trials == 0 {
        return Err(invalid("trials", "need at least one trial"));
    }
    let grid = mask.grid();
    let n = grid.points_per_dim();
    let offsets = gagliardo_offsets(grid, s, p);
    let diff = |a: usize, b: usize| {
        let (ma, mb) = (grid.multi_index(a), grid.multi_index(b));
        grid.flat_index([(ma[0] + n - mb[0]) % n, (ma[1] + n - mb[1]) % n])
    };
    let interior = mask.interior();
    let w = DMatrix::from_fn(interior.len(), interior.len(), |a, b| {
        offsets[diff(interior[a], interior[b])]
    });
    let tail: Vec<f64> = interior
        .iter()
        .map(|&x| mask.exterior().iter().map(|&y| offsets[diff(x, y)]).sum())
        .collect();
    let h = grid.cell_volume();
    let q = Quotient {
        p,
        scale: 0.5 * gagliardo_normalization(grid.dim(), s, p)? * h * h,
        h,
        w,
        tail,
    };
    let starts: Vec<Vec<f64>> = (0..trials)
        .map(|k| {
            if k == 0 {
                vec![1.0; interior.len()]
            } else {
                let mut r = rng(seed, k as u64);
                (0..interior.len()).map(|_| r.random_range(-1.0..=1.0)).collect()
            }
        })
        .collect();
    let runs: Vec<(f64, usize)> = starts.into_par_iter().map(|u| descend(&q, u)).collect();
    let per_trial: Vec<f64> = runs.iter().map(|r| r.0).collect();
    Ok(GagliardoEstimate {
        s,
        p,
        quotient: per_trial.iter().copied().fold(f64::INFINITY, f64::min),
        per_trial,
        iterations: runs.iter().map(|r| r.1).collect(),
    })
}

/// Value of the Gagliardo quotient of a single interior-supported field.
pub fn gagliardo_value(mask: &DomainMask, s: f64, p: f64, u: &crate::grid::Field) -> Result<f64> {
    let outside = mask.exterior_support(u);
    if !outside.is_empty() {
        return Err(Error::SupportViolation {
            what: "quotient needs an interior-supported field".into(),
            indices: outside,
        });
    }
    let semi = crate::fracops::gagliardo_seminorm(mask.grid(), u, s, p)?;
    let norm: f64 = u.values().iter().map(|v| v.abs().powf(p)).sum::<f64>() * mask.grid().cell_volume();
    Ok(semi.powf(p) / norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Field;
    use std::f64::consts::PI;

    fn interval(l: f64, n: usize, lo: f64, hi: f64) -> DomainMask {
        let g = make_grid(1, l, n).unwrap();
        mask_from_predicate(g, |p| p[0] > lo && p[0] < hi, &[]).unwrap()
    }

    #[test]
    fn equal_orders_give_one() {
        let m = interval(8.0, 64, -1.0, 1.0);
        assert_eq!(poincare_constant(&m, 0.4, 0.4).unwrap().constant, 1.0);
    }

    #[test]
    fn classical_dirichlet_anchor() {
        let m = interval(4.0 * PI, 256, 0.0, PI);
        let c = poincare_constant(&m, 0.0, 1.0).unwrap();
        assert!((c.constant - 1.0).abs() < 0.02, "{}", c.constant);
        assert!(c.residual < 1e-8);
    }

    #[test]
    fn two_resolution_cross_check() {
        let fine = poincare_constant(&interval(8.0, 256, -1.0, 1.0), 0.0, 0.5).unwrap();
        let coarse = poincare_constant(&interval(8.0, 128, -1.0, 1.0), 0.0, 0.5).unwrap();
        assert!(fine.constant > 0.0);
        assert!((fine.constant - coarse.constant).abs() < 0.01 * fine.constant);
    }

    #[test]
    fn subdomain_monotonicity() {
        let big = poincare_constant(&interval(8.0, 128, -1.0, 1.0), 0.0, 0.7).unwrap();
        let small = poincare_constant(&interval(8.0, 128, -0.5, 0.9), 0.0, 0.7).unwrap();
        assert!(small.constant <= big.constant + 1e-8);
    }

    #[test]
    fn interpolation_ordering_is_enforced() {
        let m = interval(8.0, 64, -1.0, 1.0);
        assert!(interpolation_check(&m, 0.5, 0.5, 1.0, 2.0).is_err());
        assert!(interpolation_check(&m, 0.0, 1.0, 0.5, 0.4).is_err());
        let trivial = interpolation_check(&m, 0.0, 0.5, 1.0, 1.0).unwrap();
        assert_eq!(trivial.c_ts, 1.0);
        assert!(trivial.holds);
    }

    #[test]
    fn motions_permute_the_lattice() {
        let g = make_grid(2, 4.0, 8).unwrap();
        for motion in [
            Motion::Identity,
            Motion::Shift { cells: [3, -2] },
            Motion::Translate { by: [1.0, 0.5] },
            Motion::AxisSwap,
            Motion::Reflect { axis: 1 },
        ] {
            let mut perm = motion.permutation(&g).unwrap();
            perm.sort_unstable();
            assert_eq!(perm, (0..g.len()).collect::<Vec<_>>());
        }
        assert!(Motion::Translate { by: [0.3, 0.0] }.permutation(&g).is_err());
        let line = make_grid(1, 4.0, 8).unwrap();
        assert!(Motion::AxisSwap.permutation(&line).is_err());
    }

    #[test]
    fn identity_motion_is_exact() {
        let m = interval(8.0, 64, -1.0, 1.0);
        let r = rigid_invariance_check(&m, Motion::Identity, 0.0, 0.5).unwrap();
        assert_eq!(r.original, r.moved);
    }

    #[test]
    fn quotient_basics() {
        let m = interval(8.0, 64, -1.0, 1.0);
        let g = *m.grid();
        let u = Field::scatter(g, m.interior(), &vec![1.0; m.interior().len()]).unwrap();
        let a = gagliardo_value(&m, 0.5, 1.5, &u).unwrap();
        let b = gagliardo_value(&m, 0.5, 1.5, &u.scaled(2.0)).unwrap();
        assert!(a.is_finite() && a > 0.0);
        assert!((a - b).abs() < 1e-12 * a);
        assert!(gagliardo_quotient(&m, 1.0, 2.0, 1, 0).is_err());
    }

    #[test]
    fn quotient_matches_kernel_eigenvalue() {
        let m = interval(8.0, 64, -1.0, 1.0);
        let est = gagliardo_quotient(&m, 0.5, 2.0, 3, 11).unwrap();
        let c = poincare_constant_with(&m, 0.0, 0.5, Flavor::Kernel).unwrap().constant;
        let want = 1.0 / (c * c);
        assert!((est.quotient - want).abs() < 0.01 * want, "{} vs {want}", est.quotient);
    }
}
