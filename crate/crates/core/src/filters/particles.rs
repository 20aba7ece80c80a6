use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::density::Moments;
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::ModelSpec;

/// Jitter added to the empirical data covariance, relative to `trace / K`.
pub const ENSEMBLE_JITTER: f64 = 1e-10;

/// `N x d` particle array.
#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    particles: DMatrix<f64>,
}

impl Ensemble {
    pub fn new(particles: DMatrix<f64>) -> Result<Self> {
        if particles.nrows() < 2 || particles.ncols() == 0 {
            return Err(Error::InvalidArgument(format!(
                "ensemble needs at least 2 particles, got {}",
                particles.nrows()
            )));
        }
        if !particles.iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument("ensemble has non-finite entries".into()));
        }
        Ok(Self { particles })
    }

    pub fn len(&self) -> usize {
        self.particles.nrows()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dim(&self) -> usize {
        self.particles.ncols()
    }

    pub fn particles(&self) -> &DMatrix<f64> {
        &self.particles
    }

    /// Sample mean and unbiased sample covariance.
    pub fn moments(&self) -> Moments {
        let (mean, cov) = sample_moments(&self.particles);
        Moments { mean, cov }
    }
}

fn sample_moments(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean = x.row_mean().transpose();
    let centered = x - DMatrix::from_fn(x.nrows(), x.ncols(), |_, j| mean[j]);
    let cov = linalg::symmetrize(&(centered.transpose() * &centered / (n - 1.0)));
    (mean, cov)
}

fn noise<R: Rng + ?Sized>(rng: &mut R, chol_l: &DMatrix<f64>, rows: usize) -> DMatrix<f64> {
    let n = chol_l.nrows();
    let z = DMatrix::from_fn(rows, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    z * chol_l.transpose()
}

/// One EnKF step with perturbed observations:
/// `u^ = Psi(u) + xi`, `y^ = H(u^) + eta`,
/// `u+ = u^ + C^uy (C^yy)^{-1} (y_dagger - y^)` with empirical covariances.
pub fn step_enkf_particles<R: Rng + ?Sized>(
    ens: &Ensemble,
    model: &ModelSpec,
    y_dagger: &DVector<f64>,
    rng: &mut R,
) -> Result<Ensemble> {
    let (d, k, n) = (model.d, model.k, ens.len());
    if ens.dim() != d || y_dagger.len() != k {
        return Err(Error::DimensionMismatch {
            expected: d + k,
            got: ens.dim() + y_dagger.len(),
        });
    }
    if n < d + k + 1 {
        log::warn!("ensemble of {n} particles is below d + K + 1 = {}; covariances are rank deficient", d + k + 1);
    }
    let l_sigma = linalg::spd_factor(&model.sigma)?.l();
    let l_gamma = linalg::spd_factor(&model.gamma)?.l();

    let mut u_hat = noise(rng, &l_sigma, n);
    let mut y_hat = noise(rng, &l_gamma, n);
    let (mut fu, mut fy) = (vec![0.0; d], vec![0.0; k]);
    for i in 0..n {
        let u: Vec<f64> = ens.particles.row(i).iter().copied().collect();
        model.psi.eval(&u, &mut fu);
        for a in 0..d {
            u_hat[(i, a)] += fu[a];
        }
        let uh: Vec<f64> = u_hat.row(i).iter().copied().collect();
        model.h.eval(&uh, &mut fy);
        for a in 0..k {
            y_hat[(i, a)] += fy[a];
        }
    }

    let mut joint = DMatrix::zeros(n, d + k);
    joint.view_mut((0, 0), (n, d)).copy_from(&u_hat);
    joint.view_mut((0, d), (n, k)).copy_from(&y_hat);
    let (_, cov) = sample_moments(&joint);
    let c_uy = cov.view((0, d), (d, k)).into_owned();
    let mut c_yy = cov.view((d, d), (k, k)).into_owned();
    let jitter = ENSEMBLE_JITTER * c_yy.trace().abs() / k as f64;
    for a in 0..k {
        c_yy[(a, a)] += jitter;
    }
    let gain = linalg::gain(&c_uy, &c_yy)?;

    let innov = DMatrix::from_fn(n, k, |i, a| y_dagger[a] - y_hat[(i, a)]);
    Ensemble::new(u_hat + innov * gain.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filters::kalman_analytic;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn two_particles_still_run() {
        let m = ModelSpec::sweep_family(0.1);
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let ens = Ensemble::new(m.initial().unwrap().sample(&mut rng, 2)).unwrap();
        let out = step_enkf_particles(&ens, &m, &DVector::from_element(1, 0.3), &mut rng).unwrap();
        assert_eq!(out.len(), 2);
    }

    #[test]
    fn large_ensemble_matches_kalman() {
        let m = ModelSpec::linear_scalar(0.9, 1.0, 0.25, 0.25, 0.0, 1.0).unwrap();
        let y = DVector::from_element(1, 0.8);
        let n = 100_000;
        let mut rng = ChaCha20Rng::seed_from_u64(5);
        let ens = Ensemble::new(m.initial().unwrap().sample(&mut rng, n)).unwrap();
        let out = step_enkf_particles(&ens, &m, &y, &mut rng).unwrap().moments();
        let k = &kalman_analytic(&m, &[y]).unwrap()[1];
        let var = k.cov()[(0, 0)];
        let se_mean = (var / n as f64).sqrt();
        let se_var = var * (2.0 / n as f64).sqrt();
        assert!((out.mean[0] - k.mean()[0]).abs() < 3.0 * se_mean + 3.0 / n as f64);
        assert!((out.cov[(0, 0)] - var).abs() < 3.0 * se_var + 3.0 / n as f64);
    }
}
