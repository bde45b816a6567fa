use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative eigenvalue floor below which a symmetric matrix is treated as singular.
const RANK_TOL: f64 = 1e-10;

/// Inverse of a symmetric positive-definite matrix via its eigen decomposition.
///
/// `what` names the matrix in the error message.
pub(crate) fn spd_inverse(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let n = m.nrows();
    if n == 0 {
        return Ok(DMatrix::zeros(0, 0));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Singular(format!("{what} has non-finite entries")));
    }
    let sym = (m + m.transpose()) * 0.5;
    let eig = sym.symmetric_eigen();
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let floor = RANK_TOL * max.max(1e-300);
    if let Some((idx, &min)) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
    {
        if min <= floor {
            let v = eig.eigenvectors.column(idx);
            let culprit = v
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map_or(0, |(i, _)| i);
            return Err(Error::Singular(format!(
                "{what} is not positive definite (smallest eigenvalue {min:.3e}, mostly along parameter {culprit})"
            )));
        }
    }
    let inv_vals = eig.eigenvalues.map(|l| 1.0 / l);
    let inv = &eig.eigenvectors * DMatrix::from_diagonal(&inv_vals) * eig.eigenvectors.transpose();
    Ok((&inv + inv.transpose()) * 0.5)
}

pub(crate) fn quad_form(v: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    (v.transpose() * m * v)[(0, 0)]
}

/// Step-halving acceptance: `next` is no worse than `cur` up to rounding; NaN never is.
pub(crate) fn improved(next: f64, cur: f64) -> bool {
    next >= cur - 1e-12 * cur.abs()
}
