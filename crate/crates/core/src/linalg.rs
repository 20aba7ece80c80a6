//! Small dense linear algebra helpers shared by the Gaussian, density and
//! filter code. Matrices here are at most a handful of rows.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};

/// Relative jitter added to the diagonal when a plain Cholesky fails.
pub const JITTER_SCALE: f64 = 1e-12;
/// Number of jitter doublings after the first jittered attempt.
pub const JITTER_DOUBLINGS: usize = 3;
/// Reciprocal condition estimate below which a covariance is rejected.
pub const RCOND_THRESHOLD: f64 = 1e-12;
/// Relative asymmetry tolerated in covariance inputs.
pub const SYMMETRY_TOL: f64 = 1e-12;

pub type Chol = Cholesky<f64, Dyn>;

pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// `max |m - m^T| / max(1, max |m|)`.
pub fn relative_asymmetry(m: &DMatrix<f64>) -> f64 {
    let scale = m.amax().max(1.0);
    (m - m.transpose()).amax() / scale
}

/// Cholesky factorization with deterministic diagonal repair.
///
/// Tries the plain factorization first, then adds `1e-12 * trace / n` to the
/// diagonal and doubles it up to three times.
pub fn cholesky_jittered(m: &DMatrix<f64>) -> Result<Chol> {
    if !m.iter().all(|v| v.is_finite()) {
        return Err(Error::NotPositiveDefinite);
    }
    if let Some(c) = m.clone().cholesky() {
        return Ok(c);
    }
    let n = m.nrows();
    let mut jitter = JITTER_SCALE * m.trace().abs() / n as f64;
    if jitter == 0.0 {
        return Err(Error::NotPositiveDefinite);
    }
    for _ in 0..=JITTER_DOUBLINGS {
        let repaired = m + DMatrix::identity(n, n) * jitter;
        if let Some(c) = repaired.cholesky() {
            return Ok(c);
        }
        jitter *= 2.0;
    }
    Err(Error::NotPositiveDefinite)
}

/// Cheap reciprocal condition estimate `(min L_ii / max L_ii)^2`.
pub fn rcond_estimate(chol: &Chol) -> f64 {
    let l = chol.l_dirty();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
    for i in 0..l.nrows() {
        let v = l[(i, i)].abs();
        lo = lo.min(v);
        hi = hi.max(v);
    }
    if hi == 0.0 {
        0.0
    } else {
        (lo / hi).powi(2)
    }
}

/// Factor an SPD matrix, rejecting it if it is numerically singular.
///
/// When the plain factorization succeeds the diagonal estimate is used. When
/// jitter was needed the repaired factor hides the defect, so the condition
/// is measured on the eigenvalues of the original matrix instead.
pub fn spd_factor(m: &DMatrix<f64>) -> Result<Chol> {
    if let Some(chol) = m.clone().cholesky() {
        let rcond = rcond_estimate(&chol);
        if rcond < RCOND_THRESHOLD {
            return Err(Error::SingularCovariance { rcond });
        }
        return Ok(chol);
    }
    let chol = cholesky_jittered(m)?;
    let ev = eigenvalues_sym(m);
    let hi = ev.max();
    let rcond = if hi > 0.0 { ev.min().max(0.0) / hi } else { 0.0 };
    if rcond < RCOND_THRESHOLD {
        return Err(Error::SingularCovariance { rcond });
    }
    Ok(chol)
}

pub fn log_det(chol: &Chol) -> f64 {
    let l = chol.l_dirty();
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
}

pub fn eigenvalues_sym(m: &DMatrix<f64>) -> DVector<f64> {
    symmetrize(m).symmetric_eigenvalues()
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues_sym(m).min()
}

pub fn max_eigenvalue(m: &DMatrix<f64>) -> f64 {
    eigenvalues_sym(m).max()
}

/// Operator 2-norm of a symmetric matrix.
pub fn spectral_norm_sym(m: &DMatrix<f64>) -> f64 {
    eigenvalues_sym(m).amax()
}

/// Operator 2-norm of a general matrix.
pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

/// `A = C_uy C_yy^{-1}` computed through a Cholesky solve.
pub fn gain(c_uy: &DMatrix<f64>, c_yy: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let chol = spd_factor(c_yy)?;
    Ok(chol.solve(&c_uy.transpose()).transpose())
}

pub fn matrix_from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidArgument("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}
