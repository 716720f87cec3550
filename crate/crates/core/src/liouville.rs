//! Conductivity ↔ Schrödinger correspondence on the grid.
//!
//! For a conductivity `γ` put `g = γ^{1/2}`, `m = g - 1` and
//! `q = -(K m) / g` with `K` the kernel-flavor fractional Laplacian. With
//! this choice of `q` the identity
//! `B_γ(u, φ) = E_K(g u, g φ) + <q g u, g φ>` holds exactly on the grid,
//! because `(g(x) - g(y))` times the symmetric weights is precisely what
//! `K m` collects.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::dnmap::DNMap;
use crate::error::{invalid, Error, Result};
use crate::forms::{conductivity_form, dirichlet_form, potential_form, BilinearForm};
use crate::fracops::{frac_gradient_pairing, Flavor, OperatorKernel};
use crate::grid::{inner, DomainMask, Field};
use crate::linalg::{checked_lu, subvector};
use crate::solver::ExteriorSolver;

#[derive(Debug, Clone)]
pub struct Conductivity {
    kernel: OperatorKernel,
    gamma: Field,
    sqrt_gamma: Field,
    m: Field,
    q: Field,
    gamma_floor: f64,
}

fn require_kernel(kernel: &OperatorKernel) -> Result<()> {
    if kernel.flavor() == Flavor::Kernel {
        Ok(())
    } else {
        Err(Error::FlavorMismatch { expected: "kernel" })
    }
}

/// Background deviation and electric potential of `γ`.
pub fn make_conductivity(gamma: &Field, kernel: &OperatorKernel) -> Result<Conductivity> {
    require_kernel(kernel)?;
    if gamma.grid() != kernel.grid() {
        return Err(Error::GridMismatch);
    }
    if let Some(k) = gamma.values().iter().position(|&v| v <= 0.0) {
        return Err(Error::Positivity(format!(
            "conductivity is {} at index {k}",
            gamma.values()[k]
        )));
    }
    let sqrt_gamma = gamma.map(f64::sqrt)?;
    let m = sqrt_gamma.map(|g| g - 1.0)?;
    let km = kernel.apply(&m)?;
    let q = km.zip_map(&sqrt_gamma, |k, g| -k / g)?;
    Ok(Conductivity {
        kernel: kernel.clone(),
        gamma: gamma.clone(),
        gamma_floor: gamma.min(),
        sqrt_gamma,
        m,
        q,
    })
}

impl Conductivity {
    pub fn kernel(&self) -> &OperatorKernel {
        &self.kernel
    }

    pub fn gamma(&self) -> &Field {
        &self.gamma
    }

    pub fn sqrt_gamma(&self) -> &Field {
        &self.sqrt_gamma
    }

    /// `m = γ^{1/2} - 1`.
    pub fn m(&self) -> &Field {
        &self.m
    }

    /// `q = -(K m) / γ^{1/2}`.
    pub fn q(&self) -> &Field {
        &self.q
    }

    pub fn gamma_floor(&self) -> f64 {
        self.gamma_floor
    }

    /// Error unless `supp(m)` avoids the named windows.
    pub fn check_window_support(&self, mask: &DomainMask, windows: &[&str]) -> Result<()> {
        let mut bad = Vec::new();
        for name in windows {
            bad.extend(
                mask.window(name)?
                    .iter()
                    .copied()
                    .filter(|&i| self.m.values()[i] != 0.0),
            );
        }
        if bad.is_empty() {
            Ok(())
        } else {
            bad.sort_unstable();
            bad.dedup();
            Err(Error::SupportViolation {
                what: "background deviation meets a measurement window".into(),
                indices: bad,
            })
        }
    }

    pub fn conductivity_form(&self) -> Result<BilinearForm> {
        conductivity_form(&self.kernel, &self.gamma)
    }

    /// `E_K + q`, the Schrödinger form the conductivity equation maps to.
    pub fn schrodinger_form(&self) -> Result<BilinearForm> {
        dirichlet_form(&self.kernel)?.add(&potential_form(self.gamma.grid(), &self.q)?)
    }
}

/// `(h^n/2) Σ W(x,y) g(x) g(y) (u(x)-u(y)) (φ(x)-φ(y))` without assembling.
fn conductivity_energy(c: &Conductivity, u: &Field, phi: &Field) -> Result<f64> {
    let grid = c.gamma.grid();
    let (uv, pv, g) = (u.values(), phi.values(), c.sqrt_gamma.values());
    let rows: Vec<f64> = (0..grid.len())
        .into_par_iter()
        .map(|x| {
            let mut acc = 0.0;
            for y in 0..grid.len() {
                let w = c.kernel.weight(x, y).expect("kernel flavor");
                acc += w * g[x] * g[y] * (uv[x] - uv[y]) * (pv[x] - pv[y]);
            }
            acc
        })
        .collect();
    Ok(0.5 * grid.cell_volume() * rows.iter().sum::<f64>())
}

/// Relative defect of `B_γ(u, φ) = E_K(g u, g φ) + <q g u, g φ>`.
pub fn liouville_identity_gap(
    c: &Conductivity,
    kernel: &OperatorKernel,
    u: &Field,
    phi: &Field,
) -> Result<f64> {
    require_kernel(kernel)?;
    if kernel.grid() != c.kernel.grid() || kernel.order() != c.kernel.order() {
        return Err(invalid("kernel", "must be the kernel the conductivity was built with"));
    }
    let lhs = conductivity_energy(c, u, phi)?;
    let v = transform(c, u, Direction::ToSchrodinger)?;
    let psi = transform(c, phi, Direction::ToSchrodinger)?;
    let energy = frac_gradient_pairing(kernel, &v, &psi)?;
    let potential = inner(&c.q.zip_map(&v, |a, b| a * b)?, &psi)?;
    let defect = (lhs - energy - potential).abs();
    let scale = lhs.abs().max(energy.abs()).max(potential.abs());
    Ok(if defect == 0.0 { 0.0 } else { defect / scale })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `v = γ^{1/2} u`
    ToSchrodinger,
    /// `u = γ^{-1/2} v`
    ToConductivity,
}

pub fn transform(c: &Conductivity, u: &Field, direction: Direction) -> Result<Field> {
    match direction {
        Direction::ToSchrodinger => u.zip_map(&c.sqrt_gamma, |a, g| a * g),
        Direction::ToConductivity => u.zip_map(&c.sqrt_gamma, |a, g| a / g),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DnComparison {
    pub conductivity: f64,
    pub schrodinger: f64,
    /// `|Λ_γ[f][g] - Λ_q[f][g]|` relative to the larger pairing.
    pub gap: f64,
}

/// Compare `<Λ_γ f, g>` with `<Λ_q f, g>` for exterior data avoiding
/// `supp(m)`.
pub fn dn_comparison_gap(
    c: &Conductivity,
    mask: &DomainMask,
    f: &Field,
    g: &Field,
) -> Result<DnComparison> {
    let mut bad: Vec<usize> = mask.interior_support(f);
    bad.extend(mask.interior_support(g));
    let m = c.m.values();
    bad.extend(
        f.support()
            .into_iter()
            .chain(g.support())
            .filter(|&i| m[i] != 0.0),
    );
    if !bad.is_empty() {
        bad.sort_unstable();
        bad.dedup();
        return Err(Error::SupportViolation {
            what: "data must be exterior and avoid supp(m)".into(),
            indices: bad,
        });
    }
    let b_gamma = c.conductivity_form()?;
    let b_q = c.schrodinger_form()?;
    let u_gamma = ExteriorSolver::new(&b_gamma, mask)?.solve(f, None)?.u;
    let u_q = ExteriorSolver::new(&b_q, mask)?.solve(f, None)?.u;
    let a = b_gamma.eval(&u_gamma, g)?;
    let b = b_q.eval(&u_q, g)?;
    let scale = a.abs().max(b.abs());
    Ok(DnComparison {
        conductivity: a,
        schrodinger: b,
        gap: if a == b { 0.0 } else { (a - b).abs() / scale },
    })
}

#[derive(Debug, Clone)]
pub struct NonuniquenessPair {
    pub second: Conductivity,
    /// Solution of the exterior problem for `K + q_1` with data `m_0`.
    pub m: Field,
    /// `max_Ω |q_1 - q_2|`.
    pub interior_q_gap: f64,
}

/// Build `γ_2` with the same interior potential as `γ_1`: solve
/// `(K + q_1) m = 0` in Ω with `m = m_0` outside, then `m_2 = m_1 - m`.
pub fn nonuniqueness_pair(
    c1: &Conductivity,
    mask: &DomainMask,
    m0_exterior: &Field,
) -> Result<NonuniquenessPair> {
    let grid = mask.grid();
    if c1.gamma.grid() != grid || m0_exterior.grid() != grid {
        return Err(Error::GridMismatch);
    }
    let inside = mask.interior_support(m0_exterior);
    if !inside.is_empty() {
        return Err(Error::SupportViolation {
            what: "m0 must vanish on the interior".into(),
            indices: inside,
        });
    }
    let mut in_windows: Vec<usize> = mask
        .windows()
        .values()
        .flatten()
        .copied()
        .filter(|&i| m0_exterior.values()[i] != 0.0)
        .collect();
    if !in_windows.is_empty() {
        in_windows.sort_unstable();
        in_windows.dedup();
        return Err(Error::SupportViolation {
            what: "m0 must vanish on the measurement windows".into(),
            indices: in_windows,
        });
    }
    let (i, e) = (mask.interior(), mask.exterior());
    let mut a_ii = c1.kernel.restricted_matrix(i, i);
    for (k, &idx) in i.iter().enumerate() {
        a_ii[(k, k)] += c1.q.values()[idx];
    }
    let rhs = -(c1.kernel.restricted_matrix(i, e) * subvector(m0_exterior.values(), e));
    let m_i = solve_checked(a_ii, &rhs, "interior operator K + q_1")?;
    let mut m = m0_exterior.values().to_vec();
    for (k, &idx) in i.iter().enumerate() {
        m[idx] = m_i[k];
    }
    let m = Field::new(*grid, m)?;
    let g2 = c1.sqrt_gamma.zip_map(&m, |g1, mm| g1 - mm)?;
    let floor = 0.5 * c1.gamma_floor;
    if let Some(k) = g2.values().iter().position(|&g| !(g > 0.0 && g * g >= floor)) {
        return Err(Error::Positivity(format!(
            "γ_2 = {:.4e} at index {k} falls below γ_0/2 = {floor:.4e}",
            g2.values()[k].powi(2)
        )));
    }
    let second = make_conductivity(&g2.map(|g| g * g)?, &c1.kernel)?;
    let interior_q_gap = i
        .iter()
        .map(|&idx| (c1.q.values()[idx] - second.q.values()[idx]).abs())
        .fold(0.0, f64::max);
    Ok(NonuniquenessPair {
        second,
        m,
        interior_q_gap,
    })
}

fn solve_checked(a: DMatrix<f64>, rhs: &DVector<f64>, what: &str) -> Result<DVector<f64>> {
    let scale = a.amax();
    let lu = checked_lu(a.clone(), what)?;
    let x = lu
        .solve(rhs)
        .ok_or_else(|| Error::Singular(what.to_string()))?;
    let res = (&a * &x - rhs).amax();
    if !x.iter().all(|v| v.is_finite()) || res > 1e-8 * (scale * x.amax() + rhs.amax()) {
        return Err(Error::Singular(format!("{what} is numerically singular")));
    }
    Ok(x)
}

#[derive(Debug, Clone, Serialize)]
pub struct ReconstructionOptions {
    pub max_iterations: usize,
    pub initial_damping: f64,
    pub damping_floor: f64,
    /// Stop once `‖fit residual‖ ≤ tolerance · ‖data‖`.
    pub tolerance: f64,
    /// Relative fit residual above which the output is flagged.
    pub low_confidence_threshold: f64,
}

impl Default for ReconstructionOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            initial_damping: 1e-3,
            damping_floor: 1e-10,
            tolerance: 1e-15,
            low_confidence_threshold: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Reconstruction {
    pub gamma: Field,
    pub q: Field,
    pub m: Field,
    pub iterations: usize,
    /// `‖Λ_q - data‖ / ‖data‖` over the fitted entries.
    pub fit_residual: f64,
    pub low_confidence: bool,
}

/// Off-diagonal DN entries `(i < j)` and the Alessandrini Jacobian
/// `∂Λ[e_i][e_j] / ∂q_x = h^n Z(x, i) Z(x, j)`.
fn forward(
    kernel: &OperatorKernel,
    mask: &DomainMask,
    q_interior: &[f64],
    with_jacobian: bool,
) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
    let grid = *mask.grid();
    let q = Field::scatter(grid, mask.interior(), q_interior)?;
    let form = dirichlet_form(kernel)?.add(&potential_form(&grid, &q)?)?;
    let solver = ExteriorSolver::new(&form, mask)?;
    let dn = crate::dnmap::dn_from_solver(&solver)?;
    let ne = mask.exterior().len();
    let pairs: Vec<(usize, usize)> = (0..ne)
        .flat_map(|i| (i + 1..ne).map(move |j| (i, j)))
        .collect();
    let values = DVector::from_iterator(pairs.len(), pairs.iter().map(|&(i, j)| dn.matrix()[(j, i)]));
    if !with_jacobian {
        return Ok((values, None));
    }
    let z = solver.interior_response()?;
    let h = grid.cell_volume();
    let jac = DMatrix::from_fn(pairs.len(), q_interior.len(), |r, x| {
        let (i, j) = pairs[r];
        h * z[(x, i)] * z[(x, j)]
    });
    Ok((values, Some(jac)))
}

/// Recover `γ` from DN data, assuming `γ ≡ 1` off the interior.
///
/// Stage 1 fits the interior potential to the off-diagonal DN entries by
/// Levenberg–Marquardt; stage 2 solves `(K + q) m = -q` in Ω with `m = 0`
/// outside and returns `γ = (1 + m)²`.
pub fn reconstruct_conductivity(
    dn_data: &DNMap,
    kernel: &OperatorKernel,
    options: &ReconstructionOptions,
) -> Result<Reconstruction> {
    require_kernel(kernel)?;
    let mask = dn_data.mask();
    if mask.grid() != kernel.grid() {
        return Err(Error::GridMismatch);
    }
    let ne = mask.exterior().len();
    let data = DVector::from_iterator(
        ne * (ne - 1) / 2,
        (0..ne).flat_map(|i| (i + 1..ne).map(move |j| (i, j))).map(|(i, j)| dn_data.matrix()[(j, i)]),
    );
    let data_norm = data.norm().max(f64::MIN_POSITIVE);
    let ni = mask.interior().len();
    let mut q = vec![0.0; ni];
    let (mut values, mut jac) = forward(kernel, mask, &q, true)?;
    let mut resid = &values - &data;
    let mut cost = resid.norm_squared();
    let mut damping = options.initial_damping;
    let mut iterations = 0;
    while iterations < options.max_iterations && resid.norm() > options.tolerance * data_norm {
        iterations += 1;
        let j = jac.as_ref().expect("jacobian requested");
        let jtj = j.transpose() * j;
        let jtr = j.transpose() * &resid;
        let mut lhs = jtj.clone();
        for k in 0..ni {
            lhs[(k, k)] += damping * jtj[(k, k)].max(f64::MIN_POSITIVE);
        }
        let Some(step) = lhs.lu().solve(&(-jtr)) else {
            damping *= 10.0;
            continue;
        };
        let trial: Vec<f64> = q.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        match forward(kernel, mask, &trial, true) {
            Ok((tv, tj)) => {
                let tr = &tv - &data;
                let tc = tr.norm_squared();
                if tc < cost {
                    q = trial;
                    values = tv;
                    jac = tj;
                    resid = tr;
                    cost = tc;
                    damping = (damping / 10.0).max(options.damping_floor);
                } else {
                    damping *= 10.0;
                }
            }
            // a trial that leaves the coercive regime is a rejected step
            Err(Error::NotCoercive { .. }) | Err(Error::Singular(_)) => damping *= 10.0,
            Err(e) => return Err(e),
        }
        if step.norm() <= f64::EPSILON * (1.0 + q.iter().map(|v| v * v).sum::<f64>().sqrt())
            && damping <= options.damping_floor
        {
            break;
        }
        if damping > 1e20 {
            break;
        }
    }
    let _ = values;
    let fit_residual = resid.norm() / data_norm;
    let grid = *mask.grid();
    let interior = mask.interior();
    let mut a_ii = kernel.restricted_matrix(interior, interior);
    for k in 0..ni {
        a_ii[(k, k)] += q[k];
    }
    let m_i = solve_checked(a_ii, &(-DVector::from_column_slice(&q)), "stage-2 operator K + q")?;
    let m = Field::scatter(grid, interior, m_i.as_slice())?;
    if let Some(k) = m.values().iter().position(|&v| !(1.0 + v > 0.0)) {
        return Err(Error::Positivity(format!(
            "reconstructed γ^{{1/2}} = {:.4e} at index {k}",
            1.0 + m.values()[k]
        )));
    }
    Ok(Reconstruction {
        gamma: m.map(|v| (1.0 + v) * (1.0 + v))?,
        q: Field::scatter(grid, interior, &q)?,
        m,
        iterations,
        fit_residual,
        low_confidence: fit_residual > options.low_confidence_threshold,
    })
}
