//! Small dense linear-algebra helpers on top of nalgebra.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Eigenvalues of a symmetric matrix, nonincreasing.
pub fn sym_eigenvalues_desc(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = symmetrize(m).symmetric_eigenvalues().iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues_desc(m).last().copied().unwrap_or(0.0)
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues_desc(m).first().copied().unwrap_or(0.0)
}

/// Operator 2-norm of a symmetric matrix.
pub fn sym_op_norm(m: &DMatrix<f64>) -> f64 {
    sym_eigenvalues_desc(m)
        .iter()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
}

/// Operator 2-norm of a general matrix (largest singular value).
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone()
        .singular_values()
        .iter()
        .fold(0.0f64, |acc, v| acc.max(*v))
}

/// Symmetric PSD square root by eigendecomposition.
///
/// Eigenvalues in `[-tol, 0)` are clamped to zero; anything more negative is
/// an error, since the input is supposed to be a covariance.
pub fn sqrt_psd(m: &DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    let eig = symmetrize(m).symmetric_eigen();
    let mut vals = eig.eigenvalues.clone();
    for v in vals.iter_mut() {
        if *v < -tol {
            return Err(Error::Conditioning(format!(
                "matrix square root of a non-PSD matrix (eigenvalue {v:.3e})"
            )));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    Ok(symmetrize(&(q * DMatrix::from_diagonal(&vals) * q.transpose())))
}

/// Inverse of a square matrix, failing on (near) singularity.
pub fn inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    inverse_with_tol(m, what, 1e-12)
}

/// [`inverse`] with singularity declared below `rel_tol` times the largest singular value.
pub fn inverse_with_tol(m: &DMatrix<f64>, what: &str, rel_tol: f64) -> Result<DMatrix<f64>> {
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if scale == 0.0 || !scale.is_finite() {
        return Err(Error::Conditioning(format!("{what} is zero or non-finite")));
    }
    let svals = m.clone().singular_values();
    let smax = svals.iter().fold(0.0f64, |a, v| a.max(*v));
    let smin = svals.iter().fold(f64::INFINITY, |a, v| a.min(*v));
    if smin <= rel_tol * smax {
        return Err(Error::Conditioning(format!(
            "{what} is singular (condition estimate {:.3e})",
            smax / smin.max(f64::MIN_POSITIVE)
        )));
    }
    m.clone()
        .try_inverse()
        .ok_or_else(|| Error::Conditioning(format!("{what} is singular")))
}

pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Invalid("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn dvec(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let r = sqrt_psd(&m, 1e-10).unwrap();
        let back = &r * &r;
        for (a, b) in back.iter().zip(m.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn sqrt_clamps_tiny_negative_and_rejects_large() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-12]);
        let r = sqrt_psd(&m, 1e-10).unwrap();
        assert_eq!(r[(1, 1)], 0.0);
        let bad = DMatrix::from_row_slice(1, 1, &[-1e-3]);
        assert!(sqrt_psd(&bad, 1e-10).is_err());
    }

    #[test]
    fn singular_inverse_is_an_error() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(inverse(&m, "h"), Err(Error::Conditioning(_))));
    }
}
