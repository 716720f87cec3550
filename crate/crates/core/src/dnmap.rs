//! Exterior Dirichlet-to-Neumann maps `Λ_B[f][g] = B(u_f, g)`.

use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{invalid, Error, Result};
use crate::forms::{BilinearForm, FormKind};
use crate::grid::{DomainMask, Field};
use crate::linalg::{max_abs, submatrix, subvector};
use crate::solver::ExteriorSolver;
use crate::table::matrix_table;

/// DN map in the exterior indicator basis: `Λ[f][g] = g_Eᵀ M f_E`, rows
/// indexed by the test datum `g`, columns by the datum `f`.
#[derive(Debug, Clone)]
pub struct DNMap {
    mask: DomainMask,
    matrix: DMatrix<f64>,
    kind: FormKind,
}

impl DNMap {
    pub fn mask(&self) -> &DomainMask {
        &self.mask
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn kind(&self) -> &FormKind {
        &self.kind
    }

    /// `Λ[f][g]`; only exterior values of `f` and `g` matter.
    pub fn pair(&self, f: &Field, g: &Field) -> Result<f64> {
        let grid = self.mask.grid();
        if f.grid() != grid || g.grid() != grid {
            return Err(Error::GridMismatch);
        }
        let e = self.mask.exterior();
        let mf = &self.matrix * subvector(f.values(), e);
        Ok(mf.dot(&subvector(g.values(), e)))
    }

    /// Block `Λ|_{W_from → W_to}`: rows on `w_to`, columns on `w_from`.
    pub fn window_block(&self, w_from: &str, w_to: &str) -> Result<DMatrix<f64>> {
        let cols = self.mask.window_positions(w_from)?;
        let rows = self.mask.window_positions(w_to)?;
        Ok(submatrix(&self.matrix, &rows, &cols))
    }

    /// `Λ_B` transposed, i.e. the map of the adjoint form.
    pub fn transpose(&self) -> Self {
        Self {
            mask: self.mask.clone(),
            matrix: self.matrix.transpose(),
            kind: FormKind::Adjoint {
                of: Box::new(self.kind.clone()),
            },
        }
    }

    /// Same map with `delta` added entrywise (measurement noise).
    pub fn perturbed(&self, delta: &DMatrix<f64>) -> Result<Self> {
        if delta.shape() != self.matrix.shape() {
            return Err(invalid(
                "delta",
                format!("shape {:?}, expected {:?}", delta.shape(), self.matrix.shape()),
            ));
        }
        Ok(Self {
            mask: self.mask.clone(),
            matrix: &self.matrix + delta,
            kind: self.kind.clone(),
        })
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        matrix_table(&self.matrix).write(path)
    }
}

/// Assemble `Λ_B = A_EE + A_EI Z` with `Z = -A_II^{-1} A_IE`.
pub fn assemble_dn(form: &BilinearForm, mask: &DomainMask) -> Result<DNMap> {
    dn_from_solver(&ExteriorSolver::new(form, mask)?)
}

pub fn dn_from_solver(solver: &ExteriorSolver) -> Result<DNMap> {
    let mask = solver.mask();
    let (i, e) = (mask.interior(), mask.exterior());
    let a = solver.form().matrix();
    let z = solver.interior_response()?;
    let matrix = submatrix(a, e, e) + submatrix(a, e, i) * z;
    Ok(DNMap {
        mask: mask.clone(),
        matrix,
        kind: solver.form().kind().clone(),
    })
}

fn require_exterior(mask: &DomainMask, field: &Field, name: &str) -> Result<()> {
    let inside = mask.interior_support(field);
    if inside.is_empty() {
        Ok(())
    } else {
        Err(Error::SupportViolation {
            what: format!("{name} must vanish on the interior"),
            indices: inside,
        })
    }
}

/// Both sides of `(Λ_1 - Λ_2)[f][g] = (B_1 - B_2)(u_f, u*_g)`, with `u_f`
/// solved for `B_1` and `u*_g` for the adjoint of `B_2`.
pub fn alessandrini_gap(
    dn1: &DNMap,
    dn2: &DNMap,
    form1: &BilinearForm,
    form2: &BilinearForm,
    mask: &DomainMask,
    f: &Field,
    g: &Field,
) -> Result<(f64, f64)> {
    require_exterior(mask, f, "f")?;
    require_exterior(mask, g, "g")?;
    let lhs = dn1.pair(f, g)? - dn2.pair(f, g)?;
    let u_f = ExteriorSolver::new(form1, mask)?.solve(f, None)?.u;
    let u_g = ExteriorSolver::new(form2, mask)?.adjoint()?.solve(g, None)?.u;
    let rhs = form1.sub(form2)?.eval(&u_f, &u_g)?;
    Ok((lhs, rhs))
}

/// `max |Λ_1 - Λ_2|` over the `W_from → W_to` block.
pub fn window_gap(dn1: &DNMap, dn2: &DNMap, w_from: &str, w_to: &str) -> Result<f64> {
    if dn1.mask != dn2.mask {
        return Err(Error::GridMismatch);
    }
    Ok(max_abs(
        &(dn1.window_block(w_from, w_to)? - dn2.window_block(w_from, w_to)?),
    ))
}

pub fn window_equal(dn1: &DNMap, dn2: &DNMap, w_from: &str, w_to: &str, tol: f64) -> Result<bool> {
    Ok(window_gap(dn1, dn2, w_from, w_to)? <= tol)
}
