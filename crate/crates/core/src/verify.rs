//! Property suites behind `filtermaps verify`.
//!
//! Each check runs a batch of seeded random cases and reports its worst
//! case as `measured` next to the threshold it is compared with.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::density::{
    dg_distance, gaussian_projection, kl_to_gaussian, lifted_epsilon, marginal_u, Grid, GridDensity,
};
use crate::error::{Error, Result};
use crate::filters::sweep::{particle_convergence, run_scenario, sweep};
use crate::filters::{generate_data, max_pairwise_dg, pairwise_dg, run_filter, step_enkf_particles, Ensemble, FilterKind};
use crate::gaussian::{dg_upper_bound, kl_divergence, BlockStructure, GaussianMeasure};
use crate::linalg;
use crate::model::{MapFamily, ModelSpec};
use crate::operators::{bayes, transport, OperatorWorkspace, Resolution};

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub suite: &'static str,
    pub name: &'static str,
    pub passed: bool,
    /// Worst case over the batch.
    pub measured: f64,
    /// Threshold `measured` is compared against.
    pub bound: f64,
    pub cases: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Gaussian,
    Density,
    Operators,
    Filters,
    All,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "gaussian" => Suite::Gaussian,
            "density" => Suite::Density,
            "operators" => Suite::Operators,
            "filters" => Suite::Filters,
            "all" => Suite::All,
            _ => return Err(Error::Config(format!("unknown suite '{s}'"))),
        })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Gaussian => "gaussian",
            Suite::Density => "density",
            Suite::Operators => "operators",
            Suite::Filters => "filters",
            Suite::All => "all",
        })
    }
}

/// Signature of Gaussian conditioning; swappable for mutation testing.
pub type ConditionFn = fn(&GaussianMeasure, &BlockStructure, &DVector<f64>) -> Result<GaussianMeasure>;

pub fn run_suite(suite: Suite, seed: u64) -> Result<Vec<Check>> {
    Ok(match suite {
        Suite::Gaussian => gaussian_suite(seed, GaussianMeasure::condition)?,
        Suite::Density => density_suite(seed)?,
        Suite::Operators => operators_suite(seed)?,
        Suite::Filters => filters_suite(seed)?,
        Suite::All => {
            let mut all = gaussian_suite(seed, GaussianMeasure::condition)?;
            all.extend(density_suite(seed)?);
            all.extend(operators_suite(seed)?);
            all.extend(filters_suite(seed)?);
            all
        }
    })
}

pub fn all_passed(checks: &[Check]) -> bool {
    checks.iter().all(|c| c.passed)
}

pub fn write_csv<W: Write>(checks: &[Check], mut w: W) -> Result<()> {
    writeln!(w, "suite,check,passed,measured,bound,cases")?;
    for c in checks {
        writeln!(
            w,
            "{},{},{},{:e},{:e},{}",
            c.suite, c.name, c.passed, c.measured, c.bound, c.cases
        )?;
    }
    Ok(())
}

pub fn format_report(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        s.push_str(&format!(
            "{:<4} {:<10} {:<40} measured {:>11.4e}  bound {:>11.4e}  ({} cases)\n",
            if c.passed { "PASS" } else { "FAIL" },
            c.suite,
            c.name,
            c.measured,
            c.bound,
            c.cases
        ));
    }
    let failed = checks.iter().filter(|c| !c.passed).count();
    s.push_str(&format!("{} checks, {failed} failed\n", checks.len()));
    s
}

fn at_most(suite: &'static str, name: &'static str, measured: f64, bound: f64, cases: usize) -> Check {
    Check {
        suite,
        name,
        passed: measured <= bound,
        measured,
        bound,
        cases,
    }
}

fn at_least(suite: &'static str, name: &'static str, measured: f64, bound: f64, cases: usize) -> Check {
    Check {
        suite,
        name,
        passed: measured >= bound,
        measured,
        bound,
        cases,
    }
}

fn rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut r = ChaCha20Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

/// SPD matrix `R diag(ev) R^T` with eigenvalues in `[lo, hi]`.
pub fn random_spd<R: Rng>(rng: &mut R, n: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let z = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let q = z.qr().q();
    let ev = DVector::from_fn(n, |_, _| rng.random_range(lo..hi));
    linalg::symmetrize(&(&q * DMatrix::from_diagonal(&ev) * q.transpose()))
}

pub fn random_gaussian<R: Rng>(rng: &mut R, n: usize) -> GaussianMeasure {
    let m = DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
    GaussianMeasure::new(m, random_spd(rng, n, 0.3, 3.0)).expect("random SPD")
}

/// Random d=K=1 joint: means in [-1, 1], eigenvalues in [0.3, 3],
/// correlation at most 0.9.
pub fn random_joint<R: Rng>(rng: &mut R) -> GaussianMeasure {
    loop {
        let g = random_gaussian(rng, 2);
        let c = g.cov();
        if c[(0, 1)].abs() <= 0.9 * (c[(0, 0)] * c[(1, 1)]).sqrt() {
            return g;
        }
    }
}

/// Grid box holding `mean +- 8 sd` of every measure on every axis.
pub fn covering_grid(gs: &[&GaussianMeasure], points: &[usize]) -> Grid {
    let n = gs[0].dim();
    let (mut lo, mut hi) = (vec![f64::INFINITY; n], vec![f64::NEG_INFINITY; n]);
    for g in gs {
        for a in 0..n {
            let r = 8.0 * g.cov()[(a, a)].sqrt();
            lo[a] = lo[a].min(g.mean()[a] - r);
            hi[a] = hi[a].max(g.mean()[a] + r);
        }
    }
    Grid::from_box(&lo, &hi, points).expect("valid box")
}

/// Mixture of one to three Gaussians with means in [-2, 2] and variances in
/// [0.1, 1.5] on a 1-D grid.
pub fn random_mixture<R: Rng>(rng: &mut R, grid: &Grid) -> GridDensity {
    let comps: Vec<(f64, GaussianMeasure)> = (0..rng.random_range(1..=3))
        .map(|_| {
            let w = rng.random_range(0.2..1.0);
            let m = rng.random_range(-2.0..2.0);
            let v = rng.random_range(0.1..1.5);
            (w, GaussianMeasure::scalar(m, v).expect("positive variance"))
        })
        .collect();
    GridDensity::from_fn(grid.clone(), |x| {
        comps
            .iter()
            .map(|(w, g)| w * (g.log_normalizer() - 0.5 * g.mahalanobis_sq(x)).exp())
            .sum()
    })
    .expect("positive mass")
}

fn gaussian_dg(a: &GaussianMeasure, b: &GaussianMeasure) -> Result<f64> {
    let points = if a.dim() == 1 { vec![2048] } else { vec![192, 192] };
    let grid = covering_grid(&[a, b], &points);
    dg_distance(
        &GridDensity::from_gaussian(a, &grid)?,
        &GridDensity::from_gaussian(b, &grid)?,
    )
}

const GAUSSIAN: &str = "gaussian";
const DENSITY: &str = "density";
const OPERATORS: &str = "operators";
const FILTERS: &str = "filters";

pub fn gaussian_suite(seed: u64, condition: ConditionFn) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let blocks = BlockStructure::new(1, 1)?;

    // conditioning against slicing the gridded joint
    let mut r = rng(seed, 10);
    let (mut worst, mut schur_min) = (0.0_f64, f64::INFINITY);
    let cases = 20;
    for _ in 0..cases {
        let joint = random_joint(&mut r);
        let y = DVector::from_element(1, r.random_range(-2.0..2.0));
        let grid = covering_grid(&[&joint], &[256, 256]);
        let gridded = GridDensity::from_gaussian(&joint, &grid)?.with_blocks(blocks)?;
        let sliced = bayes(&gridded, &y)?.moments();
        let closed = condition(&joint, &blocks, &y)?;
        worst = worst
            .max((sliced.mean[0] - closed.mean()[0]).abs())
            .max((sliced.cov[(0, 0)] - closed.cov()[(0, 0)]).abs());
        schur_min = schur_min.min(linalg::min_eigenvalue(closed.cov()));
    }
    checks.push(at_most(GAUSSIAN, "condition_matches_grid_bayes", worst, 2e-3, cases));
    checks.push(at_least(GAUSSIAN, "schur_complement_positive", schur_min, f64::MIN_POSITIVE, cases));

    let mut r = rng(seed, 11);
    let cases = 100;
    let (mut kl_min, mut kl_self) = (f64::INFINITY, 0.0_f64);
    let (mut pinsker12, mut pinsker21, mut bound_ratio) = (0.0_f64, 0.0_f64, 0.0_f64);
    for i in 0..cases {
        let n = 1 + i % 2;
        let a = random_gaussian(&mut r, n);
        let b = random_gaussian(&mut r, n);
        let kl12 = kl_divergence(&a, &b)?;
        let kl21 = kl_divergence(&b, &a)?;
        kl_min = kl_min.min(kl12).min(kl21);
        kl_self = kl_self.max(kl_divergence(&a, &a)?);
        let dg = gaussian_dg(&a, &b)?;
        let g2 = a.moment_g2() + b.moment_g2();
        pinsker12 = pinsker12.max(dg * dg / (2.0 * g2 * kl12));
        pinsker21 = pinsker21.max(dg * dg / (2.0 * g2 * kl21));
        bound_ratio = bound_ratio.max(dg / dg_upper_bound(&a, &b)?);
    }
    checks.push(at_least(GAUSSIAN, "kl_nonnegative", kl_min, 0.0, 2 * cases));
    checks.push(at_most(GAUSSIAN, "kl_self_zero", kl_self, 1e-12, cases));
    checks.push(at_most(GAUSSIAN, "pinsker_kl_1_2_ratio", pinsker12, 1.0, cases));
    checks.push(at_most(GAUSSIAN, "pinsker_kl_2_1_ratio", pinsker21, 1.0, cases));
    checks.push(at_most(GAUSSIAN, "dg_bound_dominates_ratio", bound_ratio, 1.0, cases));
    Ok(checks)
}

pub fn density_suite(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let grid = Grid::cube(1, 10.0, 1024)?;
    let mut r = rng(seed, 20);

    let cases = 100;
    let (mut mean_excess, mut cov_excess) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..cases {
        let a = random_mixture(&mut r, &grid);
        let b = random_mixture(&mut r, &grid);
        let dg = dg_distance(&a, &b)?;
        let (ma, mb) = (a.moments(), b.moments());
        mean_excess = mean_excess.max((&ma.mean - &mb.mean).norm() - 0.5 * dg);
        let factor = 1.0 + 0.5 * (&ma.mean + &mb.mean).norm();
        cov_excess = cov_excess.max(linalg::spectral_norm_sym(&(&ma.cov - &mb.cov)) - factor * dg);
    }
    checks.push(at_most(DENSITY, "moment_difference_mean_excess", mean_excess, 1e-6, cases));
    checks.push(at_most(DENSITY, "moment_difference_cov_excess", cov_excess, 1e-6, cases));

    let cases = 50;
    let (mut triangle, mut asym, mut self_dist) = (f64::NEG_INFINITY, 0.0_f64, 0.0_f64);
    for _ in 0..cases {
        let a = random_mixture(&mut r, &grid);
        let b = random_mixture(&mut r, &grid);
        let c = random_mixture(&mut r, &grid);
        let (ab, bc, ac) = (dg_distance(&a, &b)?, dg_distance(&b, &c)?, dg_distance(&a, &c)?);
        triangle = triangle.max(ac - ab - bc);
        asym = asym.max((ab - dg_distance(&b, &a)?).abs());
        self_dist = self_dist.max(dg_distance(&a, &a)?);
    }
    checks.push(at_most(DENSITY, "dg_triangle_excess", triangle, 1e-12, cases));
    checks.push(at_most(DENSITY, "dg_symmetry_defect", asym, 0.0, cases));
    checks.push(at_most(DENSITY, "dg_identity", self_dist, 0.0, cases));

    // projections of wide bimodal mixtures need more room than the mixtures
    let wide = Grid::cube(1, 18.0, 2048)?;
    let cases = 20;
    let (mut idem, mut kl_gain) = (0.0_f64, f64::INFINITY);
    for _ in 0..cases {
        let mu = random_mixture(&mut r, &wide);
        let g = gaussian_projection(&mu)?;
        let again = gaussian_projection(&GridDensity::from_gaussian(&g, &wide)?)?;
        idem = idem
            .max((g.mean() - again.mean()).amax())
            .max((g.cov() - again.cov()).amax());
        let base = kl_to_gaussian(&mu, &g)?;
        for _ in 0..20 {
            let dm = r.random_range(-0.2..0.2);
            let dv = r.random_range(-0.2..0.2) * g.cov()[(0, 0)];
            let nu = GaussianMeasure::scalar(g.mean()[0] + dm, g.cov()[(0, 0)] + dv)?;
            kl_gain = kl_gain.min(kl_to_gaussian(&mu, &nu)? - base);
        }
    }
    checks.push(at_most(DENSITY, "projection_idempotent", idem, 1e-6, cases));
    checks.push(at_least(DENSITY, "projection_minimizes_kl", kl_gain, -1e-9, cases * 20));

    // eps along a Gaussian -> bimodal family of priors, lifted with H(u) = u
    let model = ModelSpec::linear_scalar(1.0, 1.0, 0.25, 0.25, 0.0, 1.0)?;
    let ws = OperatorWorkspace::new(&model, Grid::cube(1, 14.0, 1024)?, Grid::cube(1, 16.0, 512)?)?;
    let mut eps = Vec::new();
    for s in [0.0, 0.5, 1.0, 1.5, 2.0] {
        let a = GaussianMeasure::scalar(-s, 0.25)?;
        let b = GaussianMeasure::scalar(s, 0.25)?;
        let mu = GridDensity::mix(
            &GridDensity::from_gaussian(&a, ws.state_grid_ref())?,
            &GridDensity::from_gaussian(&b, ws.state_grid_ref())?,
            0.5,
        )?;
        eps.push(lifted_epsilon(&ws.lift(&mu, &model)?)?);
    }
    let drops = eps.windows(2).filter(|w| w[1] < w[0]).count();
    checks.push(at_most(DENSITY, "eps_gaussian_prior", eps[0], 1e-3, 1));
    checks.push(at_least(DENSITY, "eps_bimodal_prior", eps[4], 0.1, 1));
    checks.push(at_most(DENSITY, "eps_monotone_drops", drops as f64, 0.0, eps.len()));
    Ok(checks)
}

pub fn operators_suite(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let model = ModelSpec::default_bounded();
    let ws = OperatorWorkspace::for_problem(&model, &[], Resolution::default_for(1))?;
    let grid = ws.state_grid_ref().clone();
    let kappa_psi = model.kappa_psi().expect("bounded");
    let kappa_h = model.kappa_h().expect("bounded");
    let (sigma, gamma) = (model.sigma_lower(), model.gamma_lower());
    let lp = model.lipschitz_p().expect("bounded");
    let lq = model.lipschitz_q().expect("bounded");
    let mut r = rng(seed, 30);

    let cases = 50;
    let (mut p_excess, mut q_excess) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    let (mut p_lin, mut q_lin, mut mass) = (0.0_f64, 0.0_f64, 0.0_f64);
    for _ in 0..cases {
        let mu = random_mixture(&mut r, &grid);
        let nu = random_mixture(&mut r, &grid);
        let d = dg_distance(&mu, &nu)?;
        let (pmu, pnu) = (ws.predict(&mu, &model)?, ws.predict(&nu, &model)?);
        p_excess = p_excess.max(dg_distance(&pmu, &pnu)? - lp * d);
        let (qmu, qnu) = (ws.lift(&mu, &model)?, ws.lift(&nu, &model)?);
        q_excess = q_excess.max(dg_distance(&qmu, &qnu)? - lq * d);
        let alpha = r.random_range(0.0..1.0);
        let mix = GridDensity::mix(&mu, &nu, alpha)?;
        p_lin = p_lin.max(dg_distance(&ws.predict(&mix, &model)?, &GridDensity::mix(&pmu, &pnu, alpha)?)?);
        q_lin = q_lin.max(dg_distance(&ws.lift(&mix, &model)?, &GridDensity::mix(&qmu, &qnu, alpha)?)?);
        mass = mass.max((pmu.mass() - 1.0).abs()).max((qmu.mass() - 1.0).abs());
    }
    checks.push(at_most(OPERATORS, "p_lipschitz_excess", p_excess, 1e-3, cases));
    checks.push(at_most(OPERATORS, "q_lipschitz_excess", q_excess, 1e-3, cases));
    checks.push(at_most(OPERATORS, "p_linear_defect", p_lin, 1e-6, cases));
    checks.push(at_most(OPERATORS, "q_linear_defect", q_lin, 1e-6, cases));

    let (mut pm, mut pc_lo, mut pc_hi) = (f64::NEG_INFINITY, f64::INFINITY, f64::INFINITY);
    let (mut qm, mut qc_lo, mut qc_hi) = (f64::NEG_INFINITY, f64::INFINITY, f64::INFINITY);
    let lower = (gamma * sigma / (2.0 * kappa_h * kappa_h + gamma)).min(gamma / 2.0);
    let (d, k) = (model.d, model.k);
    let mut upper = DMatrix::zeros(d + k, d + k);
    upper
        .view_mut((0, 0), (d, d))
        .copy_from(&(DMatrix::identity(d, d) * (2.0 * kappa_psi * kappa_psi) + &model.sigma * 2.0));
    upper
        .view_mut((d, d), (k, k))
        .copy_from(&(DMatrix::identity(k, k) * (2.0 * kappa_h * kappa_h) + &model.gamma));
    let p_upper = DMatrix::identity(d, d) * (kappa_psi * kappa_psi) + &model.sigma;
    for _ in 0..cases {
        let mu = random_mixture(&mut r, &grid);
        let p = ws.predict(&mu, &model)?;
        let pmom = p.moments();
        pm = pm.max(pmom.mean.norm() - kappa_psi);
        pc_lo = pc_lo.min(linalg::min_eigenvalue(&(&pmom.cov - &model.sigma)));
        pc_hi = pc_hi.min(linalg::min_eigenvalue(&(&p_upper - &pmom.cov)));
        let q = ws.lift(&p, &model)?;
        let qmom = q.moments();
        qm = qm.max(qmom.mean.norm() - (kappa_psi * kappa_psi + kappa_h * kappa_h).sqrt());
        qc_lo = qc_lo.min(linalg::min_eigenvalue(&qmom.cov) - lower);
        qc_hi = qc_hi.min(linalg::min_eigenvalue(&(&upper - &qmom.cov)));
        mass = mass.max((q.mass() - 1.0).abs());
    }
    checks.push(at_most(OPERATORS, "pmu_mean_excess", pm, 1e-3, cases));
    checks.push(at_least(OPERATORS, "pmu_cov_above_sigma", pc_lo, -1e-3, cases));
    checks.push(at_least(OPERATORS, "pmu_cov_below_envelope", pc_hi, -1e-3, cases));
    checks.push(at_most(OPERATORS, "qpmu_mean_excess", qm, 1e-3, cases));
    checks.push(at_least(OPERATORS, "qpmu_cov_above_lower_bound", qc_lo, -1e-3, cases));
    checks.push(at_least(OPERATORS, "qpmu_cov_below_envelope", qc_hi, -1e-3, cases));

    let blocks = BlockStructure::new(1, 1)?;
    let (mut tb, mut nongauss) = (0.0_f64, f64::INFINITY);
    for _ in 0..cases {
        let joint = random_joint(&mut r);
        let y = DVector::from_element(1, r.random_range(-2.0..2.0));
        let mut g = covering_grid(&[&joint], &[1024, 512]);
        // make sure the datum sits inside the data axis
        let ax = &g.axes()[1];
        if y[0] < ax.lo + 0.5 || y[0] > ax.hi - 0.5 {
            g = Grid::from_box(
                &[g.axes()[0].lo, ax.lo.min(y[0] - 1.0)],
                &[g.axes()[0].hi, ax.hi.max(y[0] + 1.0)],
                &[1024, 512],
            )?;
        }
        let pi = GridDensity::from_gaussian(&joint, &g)?.with_blocks(blocks)?;
        let t = transport(&pi, &y)?;
        let b = bayes(&pi, &y)?;
        tb = tb.max(dg_distance(&t, &b)?);
        mass = mass.max((t.mass() - 1.0).abs()).max((b.mass() - 1.0).abs());
    }
    checks.push(at_most(OPERATORS, "transport_equals_bayes_gaussian", tb, 5e-3, cases));

    // bimodal prior, nonlinear H: the two analyses must differ
    for _ in 0..5 {
        let s = r.random_range(1.5..2.5);
        let mu = GridDensity::mix(
            &ws.grid_state_gaussian(&GaussianMeasure::scalar(-s, 0.2)?)?,
            &ws.grid_state_gaussian(&GaussianMeasure::scalar(s, 0.2)?)?,
            0.5,
        )?;
        let joint = ws.lift(&mu, &model)?;
        let y = DVector::from_element(1, r.random_range(-0.8..0.8));
        nongauss = nongauss.min(dg_distance(&transport(&joint, &y)?, &bayes(&joint, &y)?)?);
    }
    checks.push(at_least(OPERATORS, "transport_differs_from_bayes_bimodal", nongauss, 5e-2, 5));
    checks.push(at_most(OPERATORS, "mass_conservation", mass, 1e-8, 4 * cases));

    // H constant: transport leaves the state marginal alone
    let flat = ModelSpec::scalar(
        MapFamily::Tanh { scale: 0.9 },
        MapFamily::Constant {
            value: DVector::from_element(1, 0.5),
        },
        0.25,
        0.25,
        0.0,
        1.0,
    )?;
    let wsf = OperatorWorkspace::for_problem(&flat, &[DVector::from_element(1, 1.0)], Resolution::default_for(1))?;
    let mu = random_mixture(&mut r, wsf.state_grid_ref());
    let joint = wsf.lift(&mu, &flat)?;
    let t = transport(&joint, &DVector::from_element(1, 1.0))?;
    checks.push(at_most(
        OPERATORS,
        "transport_identity_without_correlation",
        dg_distance(&t, &marginal_u(&joint)?)?,
        1e-6,
        1,
    ));
    Ok(checks)
}

pub fn filters_suite(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let res = Resolution::default_for(1);

    let lin = ModelSpec::linear_scalar(0.9, 1.0, 0.25, 0.25, 0.0, 1.0)?;
    let data = generate_data(&lin, 10, seed)?;
    let ws = OperatorWorkspace::for_problem(&lin, &data.data, res)?;
    let kalman = run_filter(FilterKind::Kalman, &lin, None, &data, seed)?;
    let mut worst = 0.0_f64;
    for kind in [FilterKind::True, FilterKind::EnkfMeanField, FilterKind::GpfBg, FilterKind::GpfGt] {
        let run = run_filter(kind, &lin, Some(&ws), &data, seed)?;
        worst = worst.max(max_pairwise_dg(&run, &kalman, ws.state_grid_ref())?);
    }
    checks.push(at_most(FILTERS, "linear_gaussian_grid_kinds_vs_kalman", worst, 5e-3, 4));

    // one large-ensemble step against the Kalman update, in standard errors
    let n = 100_000;
    let mut r = rng(seed, 40);
    let ens = Ensemble::new(lin.initial()?.sample(&mut r, n))?;
    let y = &data.data[0];
    let out = step_enkf_particles(&ens, &lin, y, &mut r)?.moments();
    let k1 = &kalman.measures[1].moments();
    let var = k1.cov[(0, 0)];
    let z_mean = (out.mean[0] - k1.mean[0]).abs() / (var / n as f64).sqrt();
    let z_var = (out.cov[(0, 0)] - var).abs() / (var * (2.0 / n as f64).sqrt());
    checks.push(at_most(FILTERS, "particles_vs_kalman_std_errors", z_mean.max(z_var), 3.0, 1));

    let run = run_scenario(&ModelSpec::sweep_family(0.2), 5, seed, res)?;
    let gt = run_filter(FilterKind::GpfGt, run.workspace.model(), Some(&run.workspace), &run.data, seed)?;
    let forms = pairwise_dg(&run.gpf, &gt, run.workspace.state_grid_ref())?;
    checks.push(at_most(
        FILTERS,
        "gpf_forms_equivalent",
        forms.into_iter().fold(0.0, f64::max),
        5e-3,
        6,
    ));

    let report = sweep(&[0.0, 0.05, 0.1, 0.2, 0.3], 5, seed, res)?;
    let npts = report.points.len();
    checks.push(at_least(FILTERS, "sweep_enkf_monotone_in_eps", f64::from(u8::from(report.monotone_enkf)), 1.0, npts));
    checks.push(at_least(FILTERS, "sweep_gpf_monotone_in_eps", f64::from(u8::from(report.monotone_gpf)), 1.0, npts));
    checks.push(at_most(
        FILTERS,
        "sweep_max_error_over_eps",
        report.max_ratio_enkf.max(report.max_ratio_gpf),
        f64::MAX,
        npts,
    ));

    let (_, slope) = particle_convergence(&ModelSpec::sweep_family(0.2), 5, seed, &[100, 1000, 10_000], 20, res)?;
    checks.push(Check {
        suite: FILTERS,
        name: "particle_convergence_slope",
        passed: (-0.7..=-0.3).contains(&slope),
        measured: slope,
        bound: -0.3,
        cases: 60,
    });
    Ok(checks)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flipped(g: &GaussianMeasure, b: &BlockStructure, y: &DVector<f64>) -> Result<GaussianMeasure> {
        // conditioning on 2 m_y - y flips the sign of the innovation
        let (_, m_y) = b.split_mean(g.mean());
        g.condition(b, &(m_y * 2.0 - y))
    }

    #[test]
    fn gaussian_suite_passes() {
        let checks = gaussian_suite(1, GaussianMeasure::condition).unwrap();
        assert!(all_passed(&checks), "{}", format_report(&checks));
    }

    #[test]
    fn density_suite_passes_across_seeds() {
        for seed in 0..4 {
            let checks = density_suite(seed).unwrap();
            assert!(all_passed(&checks), "seed {seed}\n{}", format_report(&checks));
        }
    }

    #[test]
    fn sign_flip_is_caught() {
        let checks = gaussian_suite(1, flipped).unwrap();
        let c = checks.iter().find(|c| c.name == "condition_matches_grid_bayes").unwrap();
        assert!(!c.passed);
    }

    #[test]
    fn suite_names() {
        assert_eq!("all".parse::<Suite>().unwrap(), Suite::All);
        assert!("nope".parse::<Suite>().is_err());
        assert_eq!(Suite::Operators.to_string(), "operators");
    }
}
