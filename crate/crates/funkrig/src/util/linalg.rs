//! Dense-matrix helpers: symmetrization, guarded Cholesky, spectral norms.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative eigenvalue floor for accepting a nearly-PSD matrix.
pub const PSD_FLOOR: f64 = 1e-8;

/// (A + Aᵀ)/2.
pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    0.5 * (a + a.transpose())
}

/// Cholesky of a symmetric matrix that may carry round-off asymmetry or a
/// slightly negative eigenvalue.
///
/// The matrix is symmetrized first; when plain Cholesky fails, the smallest
/// eigenvalue is inspected against the floor `-PSD_FLOOR * trace`. Within the
/// floor the matrix is shifted just enough to factor; below it the error
/// `context` is reported.
pub fn guarded_cholesky(a: &DMatrix<f64>, context: &str) -> Result<Cholesky<f64, Dyn>> {
    let sym = symmetrize(a);
    if let Some(chol) = Cholesky::new(sym.clone()) {
        return Ok(chol);
    }
    let eigs = sym.clone().symmetric_eigenvalues();
    let min_eig = eigs.min();
    let trace: f64 = sym.trace();
    let floor = -PSD_FLOOR * trace.abs().max(f64::MIN_POSITIVE);
    if min_eig < floor {
        return Err(Error::NotPositiveDefinite(format!(
            "{context}: min eigenvalue {min_eig:.3e} below floor {floor:.3e}"
        )));
    }
    let shift = (-min_eig).max(0.0) + 1e-14 * trace.abs().max(1.0);
    let shifted = &sym + DMatrix::identity(sym.nrows(), sym.ncols()) * shift;
    Cholesky::new(shifted).ok_or_else(|| {
        Error::NotPositiveDefinite(format!("{context}: shifted Cholesky still failed"))
    })
}

/// Log-determinant from a Cholesky factor.
pub fn chol_logdet(chol: &Cholesky<f64, Dyn>) -> f64 {
    2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>()
}

/// Spectral norm (largest singular value) by power iteration on BᵀB.
pub fn spectral_norm(b: &DMatrix<f64>, steps: usize, tol: f64) -> f64 {
    if b.nrows() == 0 || b.ncols() == 0 {
        return 0.0;
    }
    let mut v = DVector::from_element(b.ncols(), 1.0 / (b.ncols() as f64).sqrt());
    let mut lambda = 0.0f64;
    for _ in 0..steps {
        let w = b.transpose() * (b * &v);
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = w / norm;
        let new_lambda = (b * &next).norm_squared();
        let done = (new_lambda - lambda).abs() <= tol * new_lambda.max(1.0);
        v = next;
        lambda = new_lambda;
        if done {
            break;
        }
    }
    lambda.sqrt()
}
