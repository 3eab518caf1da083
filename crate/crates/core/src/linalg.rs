//! Small dense linear-algebra helpers shared by the filter, the metrics and
//! the surrogate.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub(crate) fn max_asymmetry(m: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

pub(crate) fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()))
}

pub(crate) fn is_finite(m: &DMatrix<f64>) -> bool {
    m.iter().all(|x| x.is_finite())
}

/// Cholesky factorization that reports the offending matrix on failure.
pub(crate) fn cholesky(m: &DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    if !is_finite(m) {
        return Err(Error::numerical_with(
            format!("{what} has non-finite entries"),
            m.clone(),
        ));
    }
    Cholesky::new(m.clone())
        .ok_or_else(|| Error::numerical_with(format!("{what} is not positive definite"), m.clone()))
}

/// `x^T M^{-1} x` through a Cholesky solve.
pub(crate) fn quadratic_form_inverse(x: &DVector<f64>, m: &DMatrix<f64>, what: &str) -> Result<f64> {
    if x.len() != m.nrows() || !m.is_square() {
        return Err(Error::dim(format!(
            "{what}: vector of length {} against {}x{} matrix",
            x.len(),
            m.nrows(),
            m.ncols()
        )));
    }
    let chol = cholesky(m, what)?;
    // ||L^{-1} x||^2
    let mut y = x.clone();
    chol.l_dirty()
        .solve_lower_triangular_mut(&mut y);
    Ok(y.norm_squared())
}

/// Symmetrize and clip eigenvalues in `[-tol, 0)` to zero. Anything more
/// negative than `-tol` is reported instead of repaired.
pub(crate) fn clip_psd(m: &DMatrix<f64>, tol: f64, what: &str) -> Result<DMatrix<f64>> {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym.clone());
    let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    if min < -tol {
        return Err(Error::numerical_with(
            format!("{what} has eigenvalue {min:e} below -{tol:e}"),
            sym,
        ));
    }
    if min >= 0.0 {
        return Ok(sym);
    }
    let clipped = eig.eigenvalues.map(|l| l.max(0.0));
    let rebuilt = &eig.eigenvectors * DMatrix::from_diagonal(&clipped) * eig.eigenvectors.transpose();
    Ok(symmetrize(&rebuilt))
}

/// A square-root factor `L` with `L L^T = M` for a symmetric PSD matrix.
/// Uses Cholesky when it succeeds, otherwise an eigen-factor, so singular
/// covariances (including the zero matrix) are handled.
pub(crate) fn psd_factor(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let clipped = clip_psd(m, 1e-10 * max_abs(m).max(1.0), what)?;
    if let Some(chol) = Cholesky::new(clipped.clone()) {
        return Ok(chol.l());
    }
    let eig = SymmetricEigen::new(clipped);
    let roots = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&roots))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clip_repairs_tiny_negative_eigenvalues() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0 - 1e-13]);
        let c = clip_psd(&m, 1e-10, "m").unwrap();
        let eig = SymmetricEigen::new(c).eigenvalues;
        assert!(eig.iter().all(|&l| l >= 0.0));
    }

    #[test]
    fn clip_rejects_indefinite() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        assert!(matches!(clip_psd(&m, 1e-10, "m"), Err(Error::Numerical { .. })));
    }

    #[test]
    fn factor_of_zero_matrix_is_zero() {
        let l = psd_factor(&DMatrix::zeros(3, 3), "zero").unwrap();
        assert!(l.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn factor_reproduces_singular_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 1.0]);
        let l = psd_factor(&m, "m").unwrap();
        assert!((&l * l.transpose() - &m).abs().max() < 1e-12);
    }
}
