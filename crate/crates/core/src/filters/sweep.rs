//! Experiments built on the filters: the near-Gaussianity sweep and the
//! particle-to-mean-field convergence study.

use rayon::prelude::*;

use super::{generate_data, max_pairwise_dg, run_filter, FilterKind, FilterTrajectory};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::operators::{OperatorWorkspace, Resolution};

/// One point of the sweep: measured `eps = max_j eps_j` of the true filter
/// and the errors `max_j d_g(., mu_j)` of the two approximate filters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepPoint {
    pub delta: f64,
    pub eps: f64,
    pub err_enkf: f64,
    pub err_gpf: f64,
}

impl SweepPoint {
    pub fn ratio_enkf(&self) -> f64 {
        self.err_enkf / self.eps
    }

    pub fn ratio_gpf(&self) -> f64 {
        self.err_gpf / self.eps
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub points: Vec<SweepPoint>,
    /// Errors nondecreasing when points are ordered by measured `eps`.
    pub monotone_enkf: bool,
    pub monotone_gpf: bool,
    pub max_ratio_enkf: f64,
    pub max_ratio_gpf: f64,
}

/// All filters for one model on one data realization.
#[derive(Clone, Debug)]
pub struct ScenarioRun {
    pub workspace: OperatorWorkspace,
    pub data: FilterTrajectory,
    pub truth: FilterTrajectory,
    pub enkf: FilterTrajectory,
    pub gpf: FilterTrajectory,
}

pub fn run_scenario(model: &ModelSpec, steps: usize, seed: u64, res: Resolution) -> Result<ScenarioRun> {
    let data = generate_data(model, steps, seed)?;
    let ws = OperatorWorkspace::for_problem(model, &data.data, res)?;
    let truth = run_filter(FilterKind::True, model, Some(&ws), &data, seed)?;
    let enkf = run_filter(FilterKind::EnkfMeanField, model, Some(&ws), &data, seed)?;
    let gpf = run_filter(FilterKind::GpfBg, model, Some(&ws), &data, seed)?;
    Ok(ScenarioRun {
        workspace: ws,
        data,
        truth,
        enkf,
        gpf,
    })
}

pub fn sweep_point(model: &ModelSpec, delta: f64, steps: usize, seed: u64, res: Resolution) -> Result<SweepPoint> {
    let run = run_scenario(model, steps, seed, res)?;
    let grid = run.workspace.state_grid_ref();
    Ok(SweepPoint {
        delta,
        eps: run.truth.max_eps(),
        err_enkf: max_pairwise_dg(&run.enkf, &run.truth, grid)?,
        err_gpf: max_pairwise_dg(&run.gpf, &run.truth, grid)?,
    })
}

fn nondecreasing(xs: impl Iterator<Item = f64>) -> bool {
    let v: Vec<f64> = xs.collect();
    v.windows(2).all(|w| w[1] >= w[0])
}

/// Summarize points: monotonicity in measured `eps` and the largest
/// `err / eps` ratios.
pub fn summarize(mut points: Vec<SweepPoint>) -> SweepReport {
    let mut by_eps = points.clone();
    by_eps.sort_by(|a, b| a.eps.total_cmp(&b.eps));
    let monotone_enkf = nondecreasing(by_eps.iter().map(|p| p.err_enkf));
    let monotone_gpf = nondecreasing(by_eps.iter().map(|p| p.err_gpf));
    let max_ratio_enkf = points.iter().map(SweepPoint::ratio_enkf).fold(0.0, f64::max);
    let max_ratio_gpf = points.iter().map(SweepPoint::ratio_gpf).fold(0.0, f64::max);
    points.sort_by(|a, b| a.delta.total_cmp(&b.delta));
    SweepReport {
        points,
        monotone_enkf,
        monotone_gpf,
        max_ratio_enkf,
        max_ratio_gpf,
    }
}

/// Sweep the default near-Gaussianity family over `deltas` (sorted).
pub fn sweep(deltas: &[f64], steps: usize, seed: u64, res: Resolution) -> Result<SweepReport> {
    sweep_models(deltas, ModelSpec::sweep_family, steps, seed, res)
}

/// Sweep an arbitrary family `delta -> model`; points run in parallel.
pub fn sweep_models(
    deltas: &[f64],
    family: impl Fn(f64) -> ModelSpec + Sync,
    steps: usize,
    seed: u64,
    res: Resolution,
) -> Result<SweepReport> {
    if deltas.is_empty() {
        return Err(Error::Config("sweep needs at least one delta".into()));
    }
    if !deltas.windows(2).all(|w| w[0] < w[1]) {
        return Err(Error::Config("sweep deltas must be strictly increasing".into()));
    }
    let points = deltas
        .par_iter()
        .map(|&delta| sweep_point(&family(delta), delta, steps, seed, res))
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(points))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConvergencePoint {
    pub ensemble_size: usize,
    /// Root mean square over replicates of `|mean(ensemble_J) - mean(mu^K_J)|`.
    pub rms_mean_error: f64,
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Finite-ensemble EnKF against the grid mean-field EnKF on one data
/// realization, over ensemble sizes and seed replicates.
pub fn particle_convergence(
    model: &ModelSpec,
    steps: usize,
    seed: u64,
    sizes: &[usize],
    replicates: usize,
    res: Resolution,
) -> Result<(Vec<ConvergencePoint>, f64)> {
    let data = generate_data(model, steps, seed)?;
    let ws = OperatorWorkspace::for_problem(model, &data.data, res)?;
    let mf = run_filter(FilterKind::EnkfMeanField, model, Some(&ws), &data, seed)?;
    let target = mf.measures.last().expect("initial measure").moments().mean;
    let points = sizes
        .iter()
        .map(|&n| {
            let sq = (0..replicates as u64)
                .into_par_iter()
                .map(|r| {
                    let run = run_filter(FilterKind::EnkfParticles(n), model, None, &data, seed.wrapping_add(1 + r))?;
                    let m = run.measures.last().expect("initial measure").moments().mean;
                    Ok((m - &target).norm_squared())
                })
                .collect::<Result<Vec<f64>>>()?;
            Ok(ConvergencePoint {
                ensemble_size: n,
                rms_mean_error: (sq.iter().sum::<f64>() / replicates as f64).sqrt(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let x: Vec<f64> = points.iter().map(|p| p.ensemble_size as f64).collect();
    let y: Vec<f64> = points.iter().map(|p| p.rms_mean_error).collect();
    let slope = loglog_slope(&x, &y);
    Ok((points, slope))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let x = [10.0, 100.0, 1000.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.5)).collect();
        assert!((loglog_slope(&x, &y) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn summary_orders_by_eps() {
        let p = |delta, eps, e| SweepPoint {
            delta,
            eps,
            err_enkf: e,
            err_gpf: e,
        };
        let r = summarize(vec![p(0.2, 0.3, 0.2), p(0.1, 0.1, 0.1)]);
        assert!(r.monotone_enkf && r.monotone_gpf);
        assert_eq!(r.points[0].delta, 0.1);
        assert!((r.max_ratio_enkf - 1.0).abs() < 1e-15);
        let r = summarize(vec![p(0.0, 0.1, 0.3), p(0.1, 0.2, 0.1)]);
        assert!(!r.monotone_enkf);
    }

    #[test]
    fn deltas_must_be_sorted() {
        assert!(sweep(&[], 1, 0, Resolution::from_points(1, 64)).is_err());
        assert!(sweep(&[0.2, 0.1], 1, 0, Resolution::from_points(1, 64)).is_err());
    }
}
