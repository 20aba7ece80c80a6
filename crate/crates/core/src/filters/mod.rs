//! Filter recursions on measures and their drivers.
//!
//! * true filter `mu_{j+1} = B Q P mu_j` on the grid,
//! * mean-field EnKF `mu_{j+1} = T Q P mu_j` on the grid,
//! * Gaussian projected filter `B G Q P = G T Q P`, Gaussian valued,
//! * finite-ensemble EnKF with perturbed observations,
//! * the analytic Kalman filter for linear-Gaussian models.

mod particles;
mod steps;
pub mod sweep;

use std::fmt;
use std::str::FromStr;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use crate::density::{dg_distance, Grid, GridDensity, Moments};
use crate::error::{Error, Result};
use crate::gaussian::GaussianMeasure;
use crate::model::ModelSpec;
use crate::operators::OperatorWorkspace;

pub use particles::{step_enkf_particles, Ensemble};
pub use steps::{kalman_analytic, kalman_envelope, step_enkf_meanfield, step_gpf, step_true, GpfForm};

/// RNG stream reserved for synthetic data; particle runs use the others.
pub const DATA_STREAM: u64 = 0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FilterKind {
    True,
    EnkfMeanField,
    GpfBg,
    GpfGt,
    /// Finite ensemble of the given size.
    EnkfParticles(usize),
    Kalman,
}

impl FilterKind {
    pub fn is_grid(self) -> bool {
        !matches!(self, FilterKind::EnkfParticles(_) | FilterKind::Kalman)
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FilterKind::True => f.write_str("true"),
            FilterKind::EnkfMeanField => f.write_str("enkf_mf"),
            FilterKind::GpfBg => f.write_str("gpf_bg"),
            FilterKind::GpfGt => f.write_str("gpf_gt"),
            FilterKind::EnkfParticles(n) => write!(f, "enkf_{n}"),
            FilterKind::Kalman => f.write_str("kalman"),
        }
    }
}

impl FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "true" => FilterKind::True,
            "enkf_mf" => FilterKind::EnkfMeanField,
            "gpf_bg" => FilterKind::GpfBg,
            "gpf_gt" => FilterKind::GpfGt,
            "kalman" => FilterKind::Kalman,
            _ => {
                let n = s
                    .strip_prefix("enkf_")
                    .and_then(|n| n.parse::<usize>().ok())
                    .ok_or_else(|| Error::Config(format!("unknown filter kind '{s}'")))?;
                if n < 2 {
                    return Err(Error::Config(format!("ensemble size {n} below 2")));
                }
                FilterKind::EnkfParticles(n)
            }
        })
    }
}

/// A filter's measure at one step.
#[derive(Clone, Debug, PartialEq)]
pub enum Measure {
    Grid(GridDensity),
    Gaussian(GaussianMeasure),
    Ensemble(Ensemble),
}

impl Measure {
    pub fn moments(&self) -> Moments {
        match self {
            Measure::Grid(g) => g.moments(),
            Measure::Gaussian(g) => Moments {
                mean: g.mean().clone(),
                cov: g.cov().clone(),
            },
            Measure::Ensemble(e) => e.moments(),
        }
    }

    /// Density on `grid`; Gaussians are gridded, ensembles are not supported.
    pub fn on_grid(&self, grid: &Grid) -> Result<GridDensity> {
        match self {
            Measure::Grid(g) if g.grid() == grid => Ok(g.clone()),
            Measure::Grid(_) => Err(Error::GridMismatch),
            Measure::Gaussian(g) => GridDensity::from_gaussian(g, grid),
            Measure::Ensemble(_) => Err(Error::InvalidArgument(
                "ensembles have no density on a grid".into(),
            )),
        }
    }
}

/// Data realization plus, after a run, the per-step measures and diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterTrajectory {
    /// `None` for a bare data realization.
    pub kind: Option<FilterKind>,
    /// `y_1 .. y_J`
    pub data: Vec<DVector<f64>>,
    /// Hidden states `u_0 .. u_J` when known.
    pub states: Option<Vec<DVector<f64>>>,
    /// `max_j |y_j|`
    pub kappa_y: f64,
    /// `mu_0 .. mu_J`
    pub measures: Vec<Measure>,
    /// `eps_j = d_g(Q P mu_j, G Q P mu_j)` for `j = 0 .. J-1` (grid kinds).
    pub eps: Vec<f64>,
}

impl FilterTrajectory {
    /// Wrap externally supplied data.
    pub fn from_data(data: Vec<DVector<f64>>) -> Self {
        let kappa_y = data.iter().map(|y| y.norm()).fold(0.0, f64::max);
        Self {
            kind: None,
            data,
            states: None,
            kappa_y,
            measures: Vec::new(),
            eps: Vec::new(),
        }
    }

    pub fn steps(&self) -> usize {
        self.data.len()
    }

    /// `max_j eps_j`, zero when nothing was measured.
    pub fn max_eps(&self) -> f64 {
        self.eps.iter().copied().fold(0.0, f64::max)
    }

    pub fn moments(&self) -> Vec<Moments> {
        self.measures.iter().map(Measure::moments).collect()
    }

    fn bare(&self) -> Self {
        Self {
            kind: None,
            data: self.data.clone(),
            states: self.states.clone(),
            kappa_y: self.kappa_y,
            measures: Vec::new(),
            eps: Vec::new(),
        }
    }
}

/// Simulate `u_{j+1} = Psi(u_j) + xi_j`, `y_{j+1} = H(u_{j+1}) + eta_{j+1}`,
/// `u_0 ~ N(m0, S0)`, with independent noises from a seeded ChaCha20 stream.
pub fn generate_data(model: &ModelSpec, steps: usize, seed: u64) -> Result<FilterTrajectory> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(DATA_STREAM);
    let xi = GaussianMeasure::new(DVector::zeros(model.d), model.sigma.clone())?;
    let eta = GaussianMeasure::new(DVector::zeros(model.k), model.gamma.clone())?;
    let u0 = model.initial()?.sample(&mut rng, 1).row(0).transpose();
    let mut states = vec![u0];
    let mut data = Vec::with_capacity(steps);
    for _ in 0..steps {
        let prev = states.last().expect("nonempty");
        let u = model.psi_at(prev) + xi.sample(&mut rng, 1).row(0).transpose();
        let y = model.h_at(&u) + eta.sample(&mut rng, 1).row(0).transpose();
        states.push(u);
        data.push(y);
    }
    let mut t = FilterTrajectory::from_data(data);
    t.states = Some(states);
    debug_assert!(t.data.iter().all(|y| y.norm() <= t.kappa_y));
    Ok(t)
}

/// Run one filter over the data of `obs`.
///
/// Grid kinds need a workspace built for `model`; `seed` drives the
/// particle filter only. A failing step is reported with its index.
pub fn run_filter(
    kind: FilterKind,
    model: &ModelSpec,
    ws: Option<&OperatorWorkspace>,
    obs: &FilterTrajectory,
    seed: u64,
) -> Result<FilterTrajectory> {
    let mut out = obs.bare();
    out.kind = Some(kind);
    let grid_ws = || {
        ws.ok_or_else(|| Error::InvalidArgument(format!("filter '{kind}' needs a grid workspace")))
    };
    match kind {
        FilterKind::True | FilterKind::EnkfMeanField => {
            let ws = grid_ws()?;
            let mut mu = ws.grid_state_gaussian(&model.initial()?)?;
            out.measures.push(Measure::Grid(mu.clone()));
            for (j, y) in obs.data.iter().enumerate() {
                let (next, eps) = if kind == FilterKind::True {
                    steps::true_step_eps(ws, &mu, model, y)
                } else {
                    steps::enkf_mf_step_eps(ws, &mu, model, y)
                }
                .map_err(|e| e.at_step(j + 1))?;
                out.eps.push(eps);
                out.measures.push(Measure::Grid(next.clone()));
                mu = next;
            }
        }
        FilterKind::GpfBg | FilterKind::GpfGt => {
            let ws = grid_ws()?;
            let form = if kind == FilterKind::GpfBg { GpfForm::Bg } else { GpfForm::Gt };
            let mut mu = model.initial()?;
            out.measures.push(Measure::Gaussian(mu.clone()));
            for (j, y) in obs.data.iter().enumerate() {
                let (next, eps) = steps::gpf_step_eps(ws, &mu, model, y, form).map_err(|e| e.at_step(j + 1))?;
                out.eps.push(eps);
                out.measures.push(Measure::Gaussian(next.clone()));
                mu = next;
            }
        }
        FilterKind::EnkfParticles(n) => {
            let mut rng = ChaCha20Rng::seed_from_u64(seed);
            rng.set_stream(DATA_STREAM + 1);
            let mut ens = Ensemble::new(model.initial()?.sample(&mut rng, n))?;
            out.measures.push(Measure::Ensemble(ens.clone()));
            for (j, y) in obs.data.iter().enumerate() {
                ens = step_enkf_particles(&ens, model, y, &mut rng).map_err(|e| e.at_step(j + 1))?;
                out.measures.push(Measure::Ensemble(ens.clone()));
            }
        }
        FilterKind::Kalman => {
            for g in kalman_analytic(model, &obs.data)? {
                out.measures.push(Measure::Gaussian(g));
            }
        }
    }
    Ok(out)
}

/// Per-step `d_g(a_j, b_j)` on a shared state grid.
pub fn pairwise_dg(a: &FilterTrajectory, b: &FilterTrajectory, grid: &Grid) -> Result<Vec<f64>> {
    if a.measures.len() != b.measures.len() {
        return Err(Error::DimensionMismatch {
            expected: a.measures.len(),
            got: b.measures.len(),
        });
    }
    a.measures
        .iter()
        .zip(&b.measures)
        .enumerate()
        .map(|(j, (x, y))| {
            dg_distance(&x.on_grid(grid)?, &y.on_grid(grid)?).map_err(|e| e.at_step(j))
        })
        .collect()
}

/// `max_j d_g(a_j, b_j)`.
pub fn max_pairwise_dg(a: &FilterTrajectory, b: &FilterTrajectory, grid: &Grid) -> Result<f64> {
    Ok(pairwise_dg(a, b, grid)?.into_iter().fold(0.0, f64::max))
}
