//! Dense linear-algebra helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub fn submatrix(m: &DMatrix<f64>, rows: &[usize], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |a, b| m[(rows[a], cols[b])])
}

pub fn subvector(v: &[f64], idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

pub fn symmetric_part(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, x| acc.max(x.abs()))
}

/// Eigen-decomposition of the pencil `A x = λ B x`, `A` symmetric and `B`
/// symmetric positive definite. Eigenvalues come back ascending; the
/// eigenvectors are `B`-orthonormal columns.
#[derive(Debug, Clone)]
pub struct GeneralizedEigen {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

pub fn generalized_symmetric_eigen(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<GeneralizedEigen> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n || b.ncols() != n {
        return Err(Error::EigenFailure("pencil dimensions disagree".into()));
    }
    if n == 0 {
        return Err(Error::EigenFailure("empty pencil".into()));
    }
    let chol = Cholesky::new(symmetric_part(b))
        .ok_or_else(|| Error::EigenFailure("right-hand matrix is not positive definite".into()))?;
    let l = chol.l();
    // C = L^{-1} A L^{-T}
    let linv_a = l
        .solve_lower_triangular(&symmetric_part(a))
        .ok_or_else(|| Error::EigenFailure("triangular solve failed".into()))?;
    let c = l
        .solve_lower_triangular(&linv_a.transpose())
        .ok_or_else(|| Error::EigenFailure("triangular solve failed".into()))?;
    let eig = SymmetricEigen::try_new(symmetric_part(&c), f64::EPSILON, 0)
        .ok_or_else(|| Error::EigenFailure("symmetric eigensolver did not converge".into()))?;
    if eig.eigenvalues.iter().any(|v| !v.is_finite()) {
        return Err(Error::EigenFailure("non-finite eigenvalue".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let y = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let vectors = l
        .transpose()
        .solve_upper_triangular(&y)
        .ok_or_else(|| Error::EigenFailure("back substitution failed".into()))?;
    Ok(GeneralizedEigen { values, vectors })
}

/// Residual `‖A x - λ B x‖ / (|λ| ‖B x‖)` of an eigenpair.
pub fn pencil_residual(a: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64, x: &DVector<f64>) -> f64 {
    let bx = b * x;
    let r = a * x - &bx * lambda;
    let scale = (lambda.abs() * bx.norm()).max(f64::MIN_POSITIVE);
    r.norm() / scale
}

/// LU factorization that refuses singular or ill-determined matrices.
pub fn checked_lu(m: DMatrix<f64>, what: &str) -> Result<nalgebra::LU<f64, Dyn, Dyn>> {
    let lu = m.lu();
    if !lu.is_invertible() {
        return Err(Error::Singular(format!("{what} is singular")));
    }
    Ok(lu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pencil_matches_scalar_case() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 9.0]);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 3.0]);
        let e = generalized_symmetric_eigen(&a, &b).unwrap();
        assert!((e.values[0] - 2.0).abs() < 1e-14);
        assert!((e.values[1] - 3.0).abs() < 1e-14);
        for k in 0..2 {
            let x = e.vectors.column(k).into_owned();
            assert!(pencil_residual(&a, &b, e.values[k], &x) < 1e-13);
            assert!(((x.transpose() * &b * &x)[(0, 0)] - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn pencil_rejects_indefinite_rhs() {
        let a = DMatrix::identity(2, 2);
        let b = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(generalized_symmetric_eigen(&a, &b).is_err());
    }

    #[test]
    fn singular_lu_is_refused() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(checked_lu(m, "block"), Err(Error::Singular(_))));
    }
}
