//! Closed-form algebra on Gaussian measures `N(m, S)`.
//!
//! Everything here is exact up to floating point: densities, block
//! conditioning, KL divergence, the moment `mu[g^2]` of the weight
//! `g(v) = 1 + |v|^2`, and the closed-form upper bound on the weighted total
//! variation distance between two Gaussians.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, Chol};

/// Split of `R^n = R^d x R^K` into a state block and a data block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockStructure {
    pub d: usize,
    pub k: usize,
}

impl BlockStructure {
    pub fn new(d: usize, k: usize) -> Result<Self> {
        if d == 0 || k == 0 {
            return Err(Error::InvalidArgument(format!(
                "block sizes must be positive (d={d}, K={k})"
            )));
        }
        Ok(Self { d, k })
    }

    pub fn n(&self) -> usize {
        self.d + self.k
    }

    /// `(M^u, M^y)`
    pub fn split_mean(&self, m: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        (
            m.rows(0, self.d).into_owned(),
            m.rows(self.d, self.k).into_owned(),
        )
    }

    /// `(C^uu, C^uy, C^yy)`
    pub fn split_cov(&self, c: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let (d, k) = (self.d, self.k);
        (
            c.view((0, 0), (d, d)).into_owned(),
            c.view((0, d), (d, k)).into_owned(),
            c.view((d, d), (k, k)).into_owned(),
        )
    }
}

/// A non-degenerate Gaussian measure on `R^n`.
#[derive(Clone, Debug)]
pub struct GaussianMeasure {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: Chol,
}

impl PartialEq for GaussianMeasure {
    fn eq(&self, other: &Self) -> bool {
        self.mean == other.mean && self.cov == other.cov
    }
}

impl GaussianMeasure {
    /// Validates symmetry (relative 1e-12) and positive definiteness.
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let n = mean.len();
        if n == 0 {
            return Err(Error::InvalidArgument("empty mean vector".into()));
        }
        if cov.nrows() != n || cov.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: cov.nrows(),
            });
        }
        if !mean.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("non-finite mean".into()));
        }
        let asym = linalg::relative_asymmetry(&cov);
        if asym > linalg::SYMMETRY_TOL {
            return Err(Error::NotSymmetric(asym));
        }
        let cov = linalg::symmetrize(&cov);
        let chol = linalg::spd_factor(&cov)?;
        Ok(Self { mean, cov, chol })
    }

    pub fn standard(n: usize) -> Result<Self> {
        Self::new(DVector::zeros(n), DMatrix::identity(n, n))
    }

    /// One-dimensional `N(mean, var)`.
    pub fn scalar(mean: f64, var: f64) -> Result<Self> {
        Self::new(DVector::from_element(1, mean), DMatrix::from_element(1, 1, var))
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn cholesky(&self) -> &Chol {
        &self.chol
    }

    fn check_dim(&self, got: usize) -> Result<()> {
        if got != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got,
            });
        }
        Ok(())
    }

    /// Normalizing constant `-(n/2) ln(2 pi) - (1/2) ln det S`.
    pub fn log_normalizer(&self) -> f64 {
        -0.5 * (self.dim() as f64 * (2.0 * std::f64::consts::PI).ln() + linalg::log_det(&self.chol))
    }

    /// `|x - m|^2_S = (x - m)^T S^{-1} (x - m)`; no dimension check.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> f64 {
        let l = self.chol.l_dirty();
        let n = self.dim();
        // forward substitution L z = x - m, reading only the lower triangle
        let mut z = [0.0_f64; 8];
        let mut zv;
        let zs: &mut [f64] = if n <= 8 {
            &mut z[..n]
        } else {
            zv = vec![0.0; n];
            &mut zv
        };
        let mut acc = 0.0;
        for i in 0..n {
            let mut s = x[i] - self.mean[i];
            for j in 0..i {
                s -= l[(i, j)] * zs[j];
            }
            zs[i] = s / l[(i, i)];
            acc += zs[i] * zs[i];
        }
        acc
    }

    pub fn log_density_at(&self, x: &DVector<f64>) -> Result<f64> {
        self.check_dim(x.len())?;
        Ok(self.log_normalizer() - 0.5 * self.mahalanobis_sq(x.as_slice()))
    }

    pub fn density_at(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.log_density_at(x)?.exp())
    }

    /// `mu[g] = 1 + |m|^2 + tr S`.
    pub fn moment_g(&self) -> f64 {
        1.0 + self.mean.norm_squared() + self.cov.trace()
    }

    /// `mu[g^2]` for `g(v) = 1 + |v|^2`, from Gaussian fourth moments:
    /// `E|v|^4 = (|m|^2 + tr S)^2 + 2 tr(S^2) + 4 m^T S m`.
    pub fn moment_g2(&self) -> f64 {
        let s = self.mean.norm_squared() + self.cov.trace();
        let tr_s2 = (&self.cov * &self.cov).trace();
        let msm = (self.mean.transpose() * &self.cov * &self.mean)[(0, 0)];
        let fourth = s * s + 2.0 * tr_s2 + 4.0 * msm;
        1.0 + 2.0 * s + fourth
    }

    /// Marginal on the coordinate range `start..start+len`.
    pub fn marginal(&self, start: usize, len: usize) -> Result<Self> {
        if len == 0 || start + len > self.dim() {
            return Err(Error::InvalidArgument(format!(
                "marginal range {start}..{} outside dimension {}",
                start + len,
                self.dim()
            )));
        }
        Self::new(
            self.mean.rows(start, len).into_owned(),
            self.cov.view((start, start), (len, len)).into_owned(),
        )
    }

    /// Law of `U` given `Y = y_dagger` for `(U, Y)` distributed as `self`:
    /// `N(m_u + S_uy S_yy^{-1}(y - m_y), S_uu - S_uy S_yy^{-1} S_uy^T)`.
    pub fn condition(&self, blocks: &BlockStructure, y_dagger: &DVector<f64>) -> Result<Self> {
        self.check_dim(blocks.n())?;
        if y_dagger.len() != blocks.k {
            return Err(Error::DimensionMismatch {
                expected: blocks.k,
                got: y_dagger.len(),
            });
        }
        let (m_u, m_y) = blocks.split_mean(&self.mean);
        let (s_uu, s_uy, s_yy) = blocks.split_cov(&self.cov);
        let a = linalg::gain(&s_uy, &s_yy)?;
        let mean = m_u + &a * (y_dagger - m_y);
        let cov = linalg::symmetrize(&(s_uu - &a * s_uy.transpose()));
        Self::new(mean, cov)
    }

    /// `count x n` matrix of i.i.d. draws `m + L z`, `z ~ N(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, count: usize) -> DMatrix<f64> {
        let n = self.dim();
        let l = self.chol.l();
        let mut out = DMatrix::zeros(count, n);
        let mut z = DVector::zeros(n);
        for r in 0..count {
            for zi in z.iter_mut() {
                *zi = rng.sample(StandardNormal);
            }
            let x = &self.mean + &l * &z;
            out.row_mut(r).copy_from(&x.transpose());
        }
        out
    }
}

/// `KL(mu1 || mu2) = (1/2)(tr(S2^{-1} S1) - n + |m1 - m2|^2_{S2} + ln det S2 - ln det S1)`.
pub fn kl_divergence(mu1: &GaussianMeasure, mu2: &GaussianMeasure) -> Result<f64> {
    mu2.check_dim(mu1.dim())?;
    let n = mu1.dim() as f64;
    let s2inv_s1 = mu2.chol.solve(&mu1.cov);
    let maha = mu2.mahalanobis_sq(mu1.mean.as_slice());
    let kl = 0.5
        * (s2inv_s1.trace() - n + maha + linalg::log_det(&mu2.chol) - linalg::log_det(&mu1.chol));
    // clamp tiny negative rounding
    Ok(kl.max(0.0))
}

/// Upper bound on `d_g(mu1, mu2)`:
/// `sqrt(mu1[g^2] + mu2[g^2]) (3 ||S2^{-1} S1 - I||_F + |m1 - m2|_{S2})`.
pub fn dg_upper_bound(mu1: &GaussianMeasure, mu2: &GaussianMeasure) -> Result<f64> {
    mu2.check_dim(mu1.dim())?;
    let n = mu1.dim();
    let frob = (mu2.chol.solve(&mu1.cov) - DMatrix::<f64>::identity(n, n)).norm();
    let dm = mu2.mahalanobis_sq(mu1.mean.as_slice()).sqrt();
    Ok((mu1.moment_g2() + mu2.moment_g2()).sqrt() * (3.0 * frob + dm))
}
