//! Bilinear forms as dense matrices over grid degrees of freedom.
//!
//! The matrix of a form `B` is stored so that `B(u, v) = vᵀ A u`, i.e.
//! `A_ij = B(e_j, e_i)`; the grid quadrature weight `h^n` is folded in.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::fracops::{check_dense, BesselMultiplier, Flavor, OperatorKernel};
use crate::grid::{DomainMask, Field, Grid};
use crate::linalg::{generalized_symmetric_eigen, max_abs, submatrix, symmetric_part};
use crate::spectral::{self, Parity};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FormKind {
    Dirichlet { s: f64, flavor: Flavor },
    Potential,
    Pdo { s: f64, order: usize },
    Conductivity { s: f64 },
    Adjoint { of: Box<FormKind> },
    Combination,
}

#[derive(Debug, Clone)]
pub struct BilinearForm {
    grid: Grid,
    order: f64,
    matrix: DMatrix<f64>,
    symmetric: bool,
    kind: FormKind,
}

impl BilinearForm {
    /// Wrap an assembled matrix. A form flagged symmetric is checked.
    pub fn from_matrix(
        grid: Grid,
        order: f64,
        matrix: DMatrix<f64>,
        symmetric: bool,
        kind: FormKind,
    ) -> Result<Self> {
        if matrix.nrows() != grid.len() || matrix.ncols() != grid.len() {
            return Err(invalid("matrix", "shape does not match the grid"));
        }
        if let Some(k) = matrix.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite(k));
        }
        let form = Self {
            grid,
            order,
            matrix,
            symmetric,
            kind,
        };
        if symmetric && !form.verify_symmetry() {
            return Err(invalid("matrix", "flagged symmetric but is not"));
        }
        Ok(form)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    /// Sobolev order `s` of the energy space `H^s` the form lives on.
    pub fn order(&self) -> f64 {
        self.order
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn kind(&self) -> &FormKind {
        &self.kind
    }

    /// `B(u, v)`.
    pub fn eval(&self, u: &Field, v: &Field) -> Result<f64> {
        if *u.grid() != self.grid || *v.grid() != self.grid {
            return Err(Error::GridMismatch);
        }
        let au = &self.matrix * DVector::from_column_slice(u.values());
        Ok(au.iter().zip(v.values()).map(|(a, b)| a * b).sum())
    }

    /// `B*(u, v) = B(v, u)`.
    pub fn adjoint(&self) -> Self {
        Self {
            grid: self.grid,
            order: self.order,
            matrix: self.matrix.transpose(),
            symmetric: self.symmetric,
            kind: FormKind::Adjoint {
                of: Box::new(self.kind.clone()),
            },
        }
    }

    fn combine(&self, other: &Self, sign: f64) -> Result<Self> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: self.grid,
            order: self.order.max(other.order),
            matrix: &self.matrix + &other.matrix * sign,
            symmetric: self.symmetric && other.symmetric,
            kind: FormKind::Combination,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(other, 1.0)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, -1.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self {
            grid: self.grid,
            order: self.order,
            matrix: &self.matrix * c,
            symmetric: self.symmetric,
            kind: FormKind::Combination,
        }
    }

    /// `max |A - Aᵀ| ≤ 1e-12 max |A|`.
    pub fn verify_symmetry(&self) -> bool {
        let skew = max_abs(&(&self.matrix - self.matrix.transpose()));
        skew <= 1e-12 * max_abs(&self.matrix)
    }

    /// Operator norm of the form on discrete `H^s × H^s`, the largest
    /// singular value of `M^{-1/2} A M^{-1/2}` with `M` the `H^s` Gram
    /// matrix. A lower bound for the continuum norm.
    pub fn hs_operator_norm(&self) -> Result<f64> {
        let sym = crate::fracops::bessel_symbol(&self.grid, -self.order);
        let csym: Vec<Complex64> = sym.iter().map(|&m| Complex64::new(m, 0.0)).collect();
        let conv = spectral::convolution_kernel(&self.grid, &csym, Parity::Even);
        let all: Vec<usize> = (0..self.grid.len()).collect();
        let m_inv_half =
            spectral::circulant_block(&self.grid, &conv, &all, &all) / self.grid.cell_volume().sqrt();
        let scaled = &m_inv_half * &self.matrix * &m_inv_half;
        Ok(scaled.singular_values().max())
    }
}

/// `L(u, v) = <(-Δ)^{s/2} u, (-Δ)^{s/2} v>`, or the kernel Dirichlet energy.
pub fn dirichlet_form(kernel: &OperatorKernel) -> Result<BilinearForm> {
    let grid = *kernel.grid();
    let a = kernel.matrix()? * grid.cell_volume();
    BilinearForm::from_matrix(
        grid,
        kernel.order(),
        a,
        true,
        FormKind::Dirichlet {
            s: kernel.order(),
            flavor: kernel.flavor(),
        },
    )
}

/// `q(u, v) = h^n Σ q_i u_i v_i`.
pub fn potential_form(grid: &Grid, q: &Field) -> Result<BilinearForm> {
    if q.grid() != grid {
        return Err(Error::GridMismatch);
    }
    check_dense(grid)?;
    let diag = DVector::from_iterator(grid.len(), q.values().iter().map(|v| v * grid.cell_volume()));
    BilinearForm::from_matrix(
        *grid,
        0.0,
        DMatrix::from_diagonal(&diag),
        true,
        FormKind::Potential,
    )
}

/// Differential operator `P = Σ_{|α| ≤ m} a_α D^α` with grid-function
/// coefficients; `D^α = ∂^α`, so the formal adjoint carries `(-1)^{|α|}`.
#[derive(Debug, Clone)]
pub struct PdoSpec {
    order: usize,
    coefficients: Vec<([usize; 2], Field)>,
}

impl PdoSpec {
    pub fn new(order: usize, coefficients: Vec<([usize; 2], Field)>) -> Result<Self> {
        for (alpha, a) in &coefficients {
            let dim = a.grid().dim();
            if alpha[0] + alpha[1] > order {
                return Err(invalid("alpha", format!("{alpha:?} exceeds order {order}")));
            }
            if dim == 1 && alpha[1] != 0 {
                return Err(invalid("alpha", "second component must vanish in 1-d"));
            }
        }
        if let Some((_, first)) = coefficients.first() {
            if coefficients.iter().any(|(_, a)| a.grid() != first.grid()) {
                return Err(Error::GridMismatch);
            }
        }
        Ok(Self {
            order,
            coefficients,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn coefficients(&self) -> &[([usize; 2], Field)] {
        &self.coefficients
    }
}

/// Multiplier of `∂^α`, `(i k_0)^{α_0} (i k_1)^{α_1}`; an axis with odd power
/// drops its Nyquist bin, which has no real antisymmetric partner.
fn derivative_symbol(grid: &Grid, alpha: [usize; 2]) -> Vec<Complex64> {
    spectral::tabulate(grid, |k, nyq| {
        let mut m = Complex64::new(1.0, 0.0);
        for axis in 0..2 {
            let p = alpha[axis];
            if p == 0 {
                continue;
            }
            if p % 2 == 1 && nyq[axis] {
                return Complex64::new(0.0, 0.0);
            }
            m *= Complex64::new(0.0, k[axis]).powi(p as i32);
        }
        m
    })
}

/// Matrix of `D^α` acting on grid functions.
pub fn derivative_matrix(grid: &Grid, alpha: [usize; 2]) -> Result<DMatrix<f64>> {
    check_dense(grid)?;
    let total = alpha[0] + alpha[1];
    let symbol = derivative_symbol(grid, alpha);
    let parity = if total.is_multiple_of(2) { Parity::Even } else { Parity::Odd };
    let conv = spectral::convolution_kernel(grid, &symbol, parity);
    let all: Vec<usize> = (0..grid.len()).collect();
    Ok(spectral::circulant_block(grid, &conv, &all, &all))
}

/// `B_P(v, w) = <(-Δ)^{s/2} v, (-Δ)^{s/2} w> + Σ <a_α D^α v, w>`.
pub fn pdo_form(kernel: &OperatorKernel, pdo: &PdoSpec) -> Result<BilinearForm> {
    if kernel.flavor() != Flavor::Spectral {
        return Err(Error::FlavorMismatch {
            expected: "spectral",
        });
    }
    let s = kernel.order();
    if pdo.order as f64 >= 2.0 * s {
        return Err(invalid(
            "order",
            format!("PDO order {} must be below 2s = {}", pdo.order, 2.0 * s),
        ));
    }
    let grid = *kernel.grid();
    let mut a = kernel.matrix()?;
    for (alpha, coeff) in &pdo.coefficients {
        if *coeff.grid() != grid {
            return Err(Error::GridMismatch);
        }
        let d = derivative_matrix(&grid, *alpha)?;
        for (i, ai) in coeff.values().iter().enumerate() {
            if *ai != 0.0 {
                for j in 0..grid.len() {
                    a[(i, j)] += ai * d[(i, j)];
                }
            }
        }
    }
    a *= grid.cell_volume();
    let symmetric = pdo
        .coefficients
        .iter()
        .all(|(alpha, c)| alpha[0] + alpha[1] == 0 || c.max_abs() == 0.0);
    BilinearForm::from_matrix(
        grid,
        s,
        a,
        symmetric,
        FormKind::Pdo {
            s,
            order: pdo.order,
        },
    )
}

/// `B_γ(u, v) = (h^n/2) Σ_{x,y} W(x,y) γ^{1/2}(x) γ^{1/2}(y) (u(x)-u(y)) (v(x)-v(y))`.
pub fn conductivity_form(kernel: &OperatorKernel, gamma: &Field) -> Result<BilinearForm> {
    let w = kernel.weight_matrix()?;
    let grid = *kernel.grid();
    if *gamma.grid() != grid {
        return Err(Error::GridMismatch);
    }
    if let Some(k) = gamma.values().iter().position(|&g| g <= 0.0) {
        return Err(Error::Positivity(format!(
            "conductivity is {} at index {k}",
            gamma.values()[k]
        )));
    }
    let g: Vec<f64> = gamma.values().iter().map(|v| v.sqrt()).collect();
    let len = grid.len();
    let h = grid.cell_volume();
    let rows: Vec<Vec<f64>> = (0..len)
        .into_par_iter()
        .map(|x| {
            let mut row: Vec<f64> = (0..len).map(|y| -w[(x, y)] * g[x] * g[y]).collect();
            row[x] = 0.0;
            row[x] = -row.iter().sum::<f64>();
            row.iter_mut().for_each(|v| *v *= h);
            row
        })
        .collect();
    let a = DMatrix::from_fn(len, len, |x, y| rows[x][y]);
    BilinearForm::from_matrix(
        grid,
        kernel.order(),
        a,
        true,
        FormKind::Conductivity { s: kernel.order() },
    )
}

/// Smallness budget `δ = (2^{-s/2} / (1 + C))²` for a Poincaré constant `C`.
pub fn delta_budget(c_poincare: f64, s: f64) -> Result<f64> {
    if !(c_poincare > 0.0 && c_poincare.is_finite()) {
        return Err(invalid("c_poincare", format!("must be positive, got {c_poincare}")));
    }
    Ok((2f64.powf(-s / 2.0) / (1.0 + c_poincare)).powi(2))
}

/// Smallest eigenvalue of `sym(A)_II x = λ M_II x` with `M` the `H^s` Gram
/// matrix; positive means discretely coercive on interior-supported fields.
pub fn coercivity_margin(form: &BilinearForm, mask: &DomainMask) -> Result<f64> {
    if form.grid() != mask.grid() {
        return Err(Error::GridMismatch);
    }
    let interior = mask.interior();
    let a = symmetric_part(&submatrix(&form.matrix, interior, interior));
    let m = BesselMultiplier::new(form.grid, form.order)?.gram_matrix(interior);
    let eig = generalized_symmetric_eigen(&a, &m)?;
    Ok(eig.values[0])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fracops::frac_gradient_pairing;
    use crate::grid::{inner, make_grid, mask_from_predicate};
    use crate::random::{random_field, rng};
    use std::f64::consts::PI;

    fn mask(grid: Grid) -> DomainMask {
        mask_from_predicate(grid, |p| p[0].abs() < 1.0, &[]).unwrap()
    }

    #[test]
    fn dirichlet_eigen_example() {
        let g = make_grid(1, 2.0 * PI, 64).unwrap();
        let k = OperatorKernel::spectral(g, 0.7).unwrap();
        let l = dirichlet_form(&k).unwrap();
        let u = Field::from_fn(g, |p| (3.0 * p[0]).cos()).unwrap();
        let val = l.eval(&u, &u).unwrap();
        assert!((val - 3f64.powf(1.4) * PI).abs() < 1e-11);
        let one = Field::constant(g, 1.0);
        assert!(l.eval(&one, &u).unwrap().abs() < 1e-11);
    }

    #[test]
    fn kernel_dirichlet_is_pairing() {
        let g = make_grid(1, 8.0, 32).unwrap();
        let k = OperatorKernel::kernel(g, 0.4).unwrap();
        let l = dirichlet_form(&k).unwrap();
        let all: Vec<usize> = (0..g.len()).collect();
        let mut r = rng(1, 0);
        let (u, v) = (random_field(g, &all, &mut r), random_field(g, &all, &mut r));
        let a = l.eval(&u, &v).unwrap();
        let b = frac_gradient_pairing(&k, &u, &v).unwrap();
        assert!((a - b).abs() < 1e-12 * b.abs().max(1.0));
    }

    #[test]
    fn potential_is_local_and_positive() {
        let g = make_grid(1, 8.0, 32).unwrap();
        let q = Field::from_fn(g, |p| 2.0 + p[0].sin()).unwrap();
        let f = potential_form(&g, &q).unwrap();
        let u = Field::scatter(g, &[1, 2, 3], &[1.0, -2.0, 0.5]).unwrap();
        let v = Field::scatter(g, &[10, 11], &[3.0, 4.0]).unwrap();
        assert_eq!(f.eval(&u, &v).unwrap(), 0.0);
        assert!(f.eval(&u, &u).unwrap() >= 1.0 * inner(&u, &u).unwrap() - 1e-15);
        let zero = potential_form(&g, &Field::zeros(g)).unwrap();
        assert_eq!(max_abs(zero.matrix()), 0.0);
    }

    #[test]
    fn pdo_collapses_to_potential_plus_dirichlet() {
        let g = make_grid(1, 8.0, 32).unwrap();
        let k = OperatorKernel::spectral(g, 0.75).unwrap();
        let q = Field::from_fn(g, |p| 1.0 + 0.1 * p[0]).unwrap();
        let p = PdoSpec::new(0, vec![([0, 0], q.clone())]).unwrap();
        let a = pdo_form(&k, &p).unwrap();
        let b = dirichlet_form(&k)
            .unwrap()
            .add(&potential_form(&g, &q).unwrap())
            .unwrap();
        assert!(max_abs(&(a.matrix() - b.matrix())) < 1e-14);
        let none = pdo_form(&k, &PdoSpec::new(1, vec![]).unwrap()).unwrap();
        assert!(max_abs(&(none.matrix() - dirichlet_form(&k).unwrap().matrix())) == 0.0);
    }

    #[test]
    fn pdo_rejects_high_order() {
        let g = make_grid(1, 8.0, 16).unwrap();
        let k = OperatorKernel::spectral(g, 0.5).unwrap();
        let p = PdoSpec::new(1, vec![([1, 0], Field::constant(g, 1.0))]).unwrap();
        assert!(pdo_form(&k, &p).is_err());
        assert!(PdoSpec::new(0, vec![([1, 0], Field::constant(g, 1.0))]).is_err());
    }

    #[test]
    fn first_derivative_matches_calculus() {
        let g = make_grid(1, 2.0 * PI, 32).unwrap();
        let d = derivative_matrix(&g, [1, 0]).unwrap();
        let u = DVector::from_iterator(32, (0..32).map(|i| (2.0 * g.point(i)[0]).sin()));
        let du = &d * u;
        for i in 0..32 {
            assert!((du[i] - 2.0 * (2.0 * g.point(i)[0]).cos()).abs() < 1e-12);
        }
        assert!(max_abs(&(&d + d.transpose())) < 1e-15);
    }

    #[test]
    fn pdo_adjoint_transpose() {
        let g = make_grid(1, 8.0, 32).unwrap();
        let k = OperatorKernel::spectral(g, 0.75).unwrap();
        let p = PdoSpec::new(
            1,
            vec![
                ([0, 0], Field::constant(g, 1.0)),
                ([1, 0], Field::from_fn(g, |x| 0.3 * (-x[0] * x[0]).exp()).unwrap()),
            ],
        )
        .unwrap();
        let b = pdo_form(&k, &p).unwrap();
        assert!(!b.is_symmetric());
        let all: Vec<usize> = (0..g.len()).collect();
        let mut r = rng(4, 0);
        let (u, v) = (random_field(g, &all, &mut r), random_field(g, &all, &mut r));
        let lhs = b.eval(&u, &v).unwrap();
        let rhs = b.adjoint().eval(&v, &u).unwrap();
        assert!((lhs - rhs).abs() < 1e-12 * lhs.abs().max(1.0));
    }

    #[test]
    fn conductivity_special_cases() {
        let g = make_grid(1, 8.0, 32).unwrap();
        let k = OperatorKernel::kernel(g, 0.4).unwrap();
        let l = dirichlet_form(&k).unwrap();
        let one = conductivity_form(&k, &Field::constant(g, 1.0)).unwrap();
        assert!(max_abs(&(one.matrix() - l.matrix())) <= 1e-12 * max_abs(l.matrix()));
        let three = conductivity_form(&k, &Field::constant(g, 3.0)).unwrap();
        assert!(max_abs(&(three.matrix() - l.matrix() * 3.0)) <= 1e-12 * max_abs(three.matrix()));
        let mut bad = vec![1.0; 32];
        bad[5] = 0.0;
        assert!(matches!(
            conductivity_form(&k, &Field::new(g, bad).unwrap()),
            Err(Error::Positivity(_))
        ));
        assert!(conductivity_form(&OperatorKernel::spectral(g, 0.4).unwrap(), &Field::constant(g, 1.0)).is_err());
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn budget_arithmetic() {
        assert!((delta_budget(1.0, 1.0).unwrap() - 0.125).abs() < 1e-15);
        let want = (2f64.powf(-0.25) / 1.3183).powi(2);
        assert!((delta_budget(0.3183, 0.5).unwrap() - want).abs() < 1e-15);
        assert!(delta_budget(10.0, 0.5).unwrap() > delta_budget(100.0, 0.5).unwrap());
        assert!(delta_budget(0.0, 0.5).is_err());
    }

    #[test]
    fn margin_cases() {
        let g = make_grid(1, 8.0, 32).unwrap();
        let m = mask(g);
        let k = OperatorKernel::spectral(g, 0.5).unwrap();
        let zero = dirichlet_form(&k).unwrap().scaled(0.0);
        assert!(coercivity_margin(&zero, &m).unwrap().abs() < 1e-10);
        let b = dirichlet_form(&k)
            .unwrap()
            .add(&potential_form(&g, &Field::constant(g, 1.0)).unwrap())
            .unwrap();
        assert!(coercivity_margin(&b, &m).unwrap() > 0.0);
        // L + 1 has symbol |k| + 1 ≥ <k>/√2... and ≤ √2 <k>
        let margin = coercivity_margin(&b, &m).unwrap();
        assert!(margin >= 1.0 / 2f64.sqrt() - 1e-12, "margin {margin}");
    }

    #[test]
    fn operator_norm_of_bessel_form() {
        // B = Gram matrix itself has unit H^s norm
        let g = make_grid(1, 8.0, 16).unwrap();
        let all: Vec<usize> = (0..g.len()).collect();
        let gram = BesselMultiplier::new(g, 0.5).unwrap().gram_matrix(&all);
        let b = BilinearForm::from_matrix(g, 0.5, gram, true, FormKind::Combination).unwrap();
        assert!((b.hs_operator_norm().unwrap() - 1.0).abs() < 1e-10);
    }
}
