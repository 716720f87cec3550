//! Exterior-value problems: find `u` with `B(u, φ) = F(φ)` for all
//! interior-supported `φ` and `u = f` off the interior.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, LU};

use crate::error::{invalid, Error, Result};
use crate::forms::{coercivity_margin, BilinearForm};
use crate::fracops::BesselMultiplier;
use crate::grid::{DomainMask, Field};
use crate::linalg::{checked_lu, submatrix, subvector};

/// Margin below which a form is treated as non-coercive.
pub const MARGIN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct ExteriorProblem {
    pub form: BilinearForm,
    pub mask: DomainMask,
    /// Read on exterior indices only.
    pub exterior_data: Field,
    /// Functional values `F(e_i)` on interior indices; zero when absent.
    pub source: Option<Field>,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub u: Field,
    /// `‖A_II u_I + A_IE f_E - F_I‖_∞` relative to the data size.
    pub residual: f64,
    pub exterior_match: bool,
}

/// Factorized interior block of a coercive form, reusable across data.
#[derive(Debug, Clone)]
pub struct ExteriorSolver {
    form: BilinearForm,
    mask: DomainMask,
    margin: f64,
    a_ii: DMatrix<f64>,
    a_ie: DMatrix<f64>,
    lu: LU<f64, Dyn, Dyn>,
}

impl ExteriorSolver {
    /// Refuses forms whose coercivity margin is not positive.
    pub fn new(form: &BilinearForm, mask: &DomainMask) -> Result<Self> {
        let margin = coercivity_margin(form, mask)?;
        if margin <= MARGIN_FLOOR {
            return Err(Error::NotCoercive { margin });
        }
        Self::with_margin(form, mask, margin)
    }

    fn with_margin(form: &BilinearForm, mask: &DomainMask, margin: f64) -> Result<Self> {
        if form.grid() != mask.grid() {
            return Err(Error::GridMismatch);
        }
        let (i, e) = (mask.interior(), mask.exterior());
        let a_ii = submatrix(form.matrix(), i, i);
        let a_ie = submatrix(form.matrix(), i, e);
        let lu = checked_lu(a_ii.clone(), "interior block")?;
        Ok(Self {
            form: form.clone(),
            mask: mask.clone(),
            margin,
            a_ii,
            a_ie,
            lu,
        })
    }

    /// Solver for the adjoint form `B*`; shares the coercivity certificate.
    pub fn adjoint(&self) -> Result<Self> {
        Self::with_margin(&self.form.adjoint(), &self.mask, self.margin)
    }

    pub fn form(&self) -> &BilinearForm {
        &self.form
    }

    pub fn mask(&self) -> &DomainMask {
        &self.mask
    }

    pub fn margin(&self) -> f64 {
        self.margin
    }

    pub fn solve(&self, f: &Field, source: Option<&Field>) -> Result<Solution> {
        let grid = *self.mask.grid();
        if *f.grid() != grid || source.is_some_and(|s| *s.grid() != grid) {
            return Err(Error::GridMismatch);
        }
        let (i, e) = (self.mask.interior(), self.mask.exterior());
        let f_e = subvector(f.values(), e);
        let rhs_src = match source {
            Some(s) => subvector(s.values(), i),
            None => DVector::zeros(i.len()),
        };
        let rhs = &rhs_src - &self.a_ie * &f_e;
        let u_i = self
            .lu
            .solve(&rhs)
            .ok_or_else(|| Error::Singular("interior block".into()))?;
        let res = (&self.a_ii * &u_i - &rhs).amax();
        let scale = f_e.amax().max(rhs_src.amax()).max(f64::MIN_POSITIVE);
        let mut u = f.values().to_vec();
        for (k, &idx) in i.iter().enumerate() {
            u[idx] = u_i[k];
        }
        let exterior_match = e.iter().all(|&idx| u[idx] == f.values()[idx]);
        Ok(Solution {
            u: Field::new(grid, u)?,
            residual: res / scale,
            exterior_match,
        })
    }

    /// Interior response `Z = -A_II^{-1} A_IE`, so `u_I = Z f_E` for
    /// source-free problems.
    pub fn interior_response(&self) -> Result<DMatrix<f64>> {
        let z = self
            .lu
            .solve(&self.a_ie)
            .ok_or_else(|| Error::Singular("interior block".into()))?;
        Ok(-z)
    }
}

pub fn solve_exterior(p: &ExteriorProblem) -> Result<Solution> {
    ExteriorSolver::new(&p.form, &p.mask)?.solve(&p.exterior_data, p.source.as_ref())
}

pub fn solve_adjoint(p: &ExteriorProblem) -> Result<Solution> {
    ExteriorSolver::new(&p.form.adjoint(), &p.mask)?.solve(&p.exterior_data, p.source.as_ref())
}

/// Relative `H^s` distance from `target` to span{u_{f_j} - f_j}, where the
/// `f_j` are indicators of the first `n_sources` window points.
pub fn runge_residual(
    form: &BilinearForm,
    mask: &DomainMask,
    source_window: &[usize],
    target: &Field,
    n_sources: usize,
) -> Result<f64> {
    let seq = runge_residual_sequence(form, mask, source_window, target, n_sources)?;
    Ok(*seq.last().expect("n_sources ≥ 1"))
}

/// Residuals for 1, 2, …, `n_sources` sources (nested spans).
pub fn runge_residual_sequence(
    form: &BilinearForm,
    mask: &DomainMask,
    source_window: &[usize],
    target: &Field,
    n_sources: usize,
) -> Result<Vec<f64>> {
    if source_window.is_empty() {
        return Err(Error::EmptyWindow("source".into()));
    }
    if n_sources == 0 || n_sources > source_window.len() {
        return Err(invalid(
            "n_sources",
            format!("must lie in 1..={}", source_window.len()),
        ));
    }
    let outside = mask.exterior_support(target);
    if !outside.is_empty() {
        return Err(Error::SupportViolation {
            what: "Runge target must live on the interior".into(),
            indices: outside,
        });
    }
    let bad: Vec<usize> = source_window
        .iter()
        .copied()
        .filter(|&j| j >= mask.grid().len() || mask.is_interior(j))
        .collect();
    if !bad.is_empty() {
        return Err(Error::SupportViolation {
            what: "source window meets the interior".into(),
            indices: bad,
        });
    }
    let solver = ExteriorSolver::new(form, mask)?;
    let z = solver.interior_response()?;
    let interior = mask.interior();
    let gram = BesselMultiplier::new(*mask.grid(), form.order())?.gram_matrix(interior);
    let lt = Cholesky::new(gram)
        .ok_or_else(|| Error::Singular("H^s Gram matrix".into()))?
        .l()
        .transpose();
    let t = &lt * subvector(target.values(), interior);
    let t_norm = t.norm();
    if t_norm == 0.0 {
        return Ok(vec![0.0; n_sources]);
    }
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut r = t.clone();
    let mut out = Vec::with_capacity(n_sources);
    for &j in &source_window[..n_sources] {
        let col = mask.exterior_position(j).expect("checked above");
        let mut v = &lt * z.column(col);
        let raw = v.norm();
        // two passes of modified Gram-Schmidt
        for _ in 0..2 {
            for q in &basis {
                let c = q.dot(&v);
                v.axpy(-c, q, 1.0);
            }
        }
        let kept = v.norm();
        if raw > 0.0 && kept > 1e-10 * raw {
            v /= kept;
            let c = v.dot(&r);
            r.axpy(-c, &v, 1.0);
            basis.push(v);
        }
        out.push(r.norm() / t_norm);
    }
    Ok(out)
}
