//! Library results against independent oracles: closed forms written out
//! by hand, brute-force quadrature and large Monte Carlo samples.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

use filtermaps::density::{dg_distance, kl_to_gaussian, lifted_epsilon, Grid, GridDensity};
use filtermaps::filters::{generate_data, kalman_analytic, run_filter, step_true, FilterKind};
use filtermaps::gaussian::{kl_divergence, BlockStructure, GaussianMeasure};
use filtermaps::operators::{bayes, kalman_gain, transport, OperatorWorkspace, Resolution};
use filtermaps::{MapFamily, ModelSpec};

fn normal_pdf(x: f64, m: f64, v: f64) -> f64 {
    (-(x - m) * (x - m) / (2.0 * v)).exp() / (2.0 * std::f64::consts::PI * v).sqrt()
}

/// Composite Simpson rule on [a, b] with `n` (even) panels.
fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
    }
    s * h / 3.0
}

fn psi_sweep(u: f64, delta: f64) -> f64 {
    0.9 * u.tanh() + delta * (3.0 * u).sin()
}

fn h_sweep(u: f64, delta: f64) -> f64 {
    u.tanh() + delta * u * u / (1.0 + u * u)
}

#[test]
fn normal_1_4_density_matches_formula() {
    let g = GaussianMeasure::scalar(1.0, 4.0).unwrap();
    for x in [-5.0, -1.0, 0.0, 1.0, 2.5, 7.0] {
        let p = g.density_at(&DVector::from_element(1, x)).unwrap();
        assert!((p - normal_pdf(x, 1.0, 4.0)).abs() < 1e-15, "x = {x}");
    }
    let grid = Grid::cube(1, 30.0, 4001).unwrap();
    let rho = GridDensity::from_gaussian(&g, &grid).unwrap();
    let nodes = grid.coordinate(0);
    let worst = nodes
        .iter()
        .zip(rho.values())
        .map(|(x, r)| (r - normal_pdf(*x, 1.0, 4.0)).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-9, "{worst}");
    let m = rho.moments();
    assert!((m.mean[0] - 1.0).abs() < 1e-9);
    assert!((m.cov[(0, 0)] - 4.0).abs() < 1e-8);
}

#[test]
fn mixture_moments_closed_form() {
    // 0.3 N(-1, 0.5) + 0.7 N(2, 1.5)
    let (w1, m1, v1, w2, m2, v2) = (0.3, -1.0, 0.5, 0.7, 2.0, 1.5);
    let grid = Grid::cube(1, 15.0, 3001).unwrap();
    let rho = GridDensity::from_fn(grid, |x| w1 * normal_pdf(x[0], m1, v1) + w2 * normal_pdf(x[0], m2, v2)).unwrap();
    let mean = w1 * m1 + w2 * m2;
    let var = w1 * (v1 + m1 * m1) + w2 * (v2 + m2 * m2) - mean * mean;
    let m = rho.moments();
    assert!((m.mean[0] - mean).abs() < 1e-8, "{} vs {mean}", m.mean[0]);
    assert!((m.cov[(0, 0)] - var).abs() < 1e-7, "{} vs {var}", m.cov[(0, 0)]);
}

#[test]
fn skewed_density_moments() {
    let f = |v: f64| (-v * v / 2.0).exp() * (1.0 + 0.5 * v.tanh());
    let z = simpson(f, -14.0, 14.0, 200_000);
    let mean = simpson(|v| v * f(v), -14.0, 14.0, 200_000) / z;
    let var = simpson(|v| (v - mean) * (v - mean) * f(v), -14.0, 14.0, 200_000) / z;
    let grid = Grid::cube(1, 14.0, 2048).unwrap();
    let m = GridDensity::from_fn(grid, |x| f(x[0])).unwrap().moments();
    assert!(mean > 0.1, "skew pushes the mean right: {mean}");
    assert!((m.mean[0] - mean).abs() < 1e-9, "{} vs {mean}", m.mean[0]);
    assert!((m.cov[(0, 0)] - var).abs() < 1e-9, "{} vs {var}", m.cov[(0, 0)]);
}

#[test]
fn dg_against_refined_quadrature() {
    // d_g(N(0,1), N(1,4)) by a fine Simpson rule on the exact densities
    let oracle = simpson(
        |x| (1.0 + x * x) * (normal_pdf(x, 0.0, 1.0) - normal_pdf(x, 1.0, 4.0)).abs(),
        -40.0,
        40.0,
        400_000,
    );
    let grid = Grid::cube(1, 40.0, 8001).unwrap();
    let a = GridDensity::from_gaussian(&GaussianMeasure::scalar(0.0, 1.0).unwrap(), &grid).unwrap();
    let b = GridDensity::from_gaussian(&GaussianMeasure::scalar(1.0, 4.0).unwrap(), &grid).unwrap();
    let dg = dg_distance(&a, &b).unwrap();
    assert!((dg - oracle).abs() < 1e-4 * oracle, "{dg} vs {oracle}");
}

#[test]
fn kl_closed_form_against_quadrature() {
    let p = GaussianMeasure::scalar(0.5, 0.8).unwrap();
    let q = GaussianMeasure::scalar(-0.3, 2.0).unwrap();
    let oracle = simpson(
        |x| {
            let a = normal_pdf(x, 0.5, 0.8);
            if a > 0.0 {
                a * (a / normal_pdf(x, -0.3, 2.0)).ln()
            } else {
                0.0
            }
        },
        -20.0,
        20.0,
        200_000,
    );
    assert!((kl_divergence(&p, &q).unwrap() - oracle).abs() < 1e-9);
    let grid = Grid::cube(1, 20.0, 4001).unwrap();
    let kl = kl_to_gaussian(&GridDensity::from_gaussian(&p, &grid).unwrap(), &q).unwrap();
    assert!((kl - oracle).abs() < 1e-6, "{kl} vs {oracle}");
}

#[test]
fn conditioning_closed_form() {
    // 2-D state, 1-D datum: textbook Schur complement with an explicit inverse
    let mean = DVector::from_column_slice(&[0.2, -0.4, 0.7]);
    let cov = DMatrix::from_row_slice(3, 3, &[2.0, 0.3, 0.8, 0.3, 1.0, -0.4, 0.8, -0.4, 1.5]);
    let y = DVector::from_element(1, 1.3);
    let g = GaussianMeasure::new(mean.clone(), cov.clone()).unwrap();
    let c = g.condition(&BlockStructure::new(2, 1).unwrap(), &y).unwrap();
    let cuu = cov.view((0, 0), (2, 2)).clone_owned();
    let cuy = cov.view((0, 2), (2, 1)).clone_owned();
    let cyy_inv = 1.0 / cov[(2, 2)];
    let m = mean.rows(0, 2) + &cuy * (cyy_inv * (y[0] - mean[2]));
    let s = &cuu - &cuy * cuy.transpose() * cyy_inv;
    assert!((c.mean() - m).amax() < 1e-14);
    assert!((c.cov() - s).amax() < 1e-14);
}

fn gaussian_joint_grid(joint: &GaussianMeasure) -> GridDensity {
    let grid = Grid::from_box(&[-9.0, -9.0], &[9.0, 9.0], &[512, 512]).unwrap();
    GridDensity::from_gaussian(joint, &grid)
        .unwrap()
        .with_blocks(BlockStructure::new(1, 1).unwrap())
        .unwrap()
}

#[test]
fn gridded_gaussian_analyses_match_closed_form() {
    let (mu, my, cuu, cuy, cyy) = (0.3, -0.2, 1.2, 0.6, 0.9);
    let joint = GaussianMeasure::new(
        DVector::from_column_slice(&[mu, my]),
        DMatrix::from_row_slice(2, 2, &[cuu, cuy, cuy, cyy]),
    )
    .unwrap();
    let pi = gaussian_joint_grid(&joint);
    let gain = kalman_gain(&pi).unwrap()[(0, 0)];
    assert!((gain - cuy / cyy).abs() < 1e-6, "{gain}");
    let y = DVector::from_element(1, 0.8);
    let post_mean = mu + cuy / cyy * (y[0] - my);
    let post_var = cuu - cuy * cuy / cyy;
    for post in [bayes(&pi, &y).unwrap(), transport(&pi, &y).unwrap()] {
        let m = post.moments();
        assert!((m.mean[0] - post_mean).abs() < 2e-3, "{} vs {post_mean}", m.mean[0]);
        assert!((m.cov[(0, 0)] - post_var).abs() < 2e-3, "{} vs {post_var}", m.cov[(0, 0)]);
    }
}

#[test]
fn grid_bayes_against_direct_quadrature() {
    // non-Gaussian joint: posterior mean by Simpson on the slice y = y0
    let f = |u: f64, y: f64| normal_pdf(u, 0.0, 1.0) * normal_pdf(y, u.tanh() + 0.3 * u * u / (1.0 + u * u), 0.25);
    let grid = Grid::from_box(&[-8.0, -6.0], &[8.0, 6.0], &[800, 600]).unwrap();
    let pi = GridDensity::from_fn(grid, |x| f(x[0], x[1]))
        .unwrap()
        .with_blocks(BlockStructure::new(1, 1).unwrap())
        .unwrap();
    let y0 = 0.55;
    let z = simpson(|u| f(u, y0), -8.0, 8.0, 20_000);
    let mean = simpson(|u| u * f(u, y0), -8.0, 8.0, 20_000) / z;
    let var = simpson(|u| (u - mean) * (u - mean) * f(u, y0), -8.0, 8.0, 20_000) / z;
    let m = bayes(&pi, &DVector::from_element(1, y0)).unwrap().moments();
    assert!((m.mean[0] - mean).abs() < 2e-3, "{} vs {mean}", m.mean[0]);
    assert!((m.cov[(0, 0)] - var).abs() < 2e-3, "{} vs {var}", m.cov[(0, 0)]);
}

fn tanh_model() -> ModelSpec {
    ModelSpec::scalar(
        MapFamily::Tanh { scale: 1.0 },
        MapFamily::Tanh { scale: 1.0 },
        0.25,
        0.25,
        0.0,
        1.0,
    )
    .unwrap()
}

#[test]
fn prediction_against_monte_carlo() {
    // Psi = tanh, Sigma = 0.25, mu = N(1, 0.5), 10^6 pushed samples
    let model = tanh_model();
    let ws = OperatorWorkspace::for_problem(&model, &[], Resolution::default_for(1)).unwrap();
    let prior = GaussianMeasure::scalar(1.0, 0.5).unwrap();
    let p = ws.predict(&ws.grid_state_gaussian(&prior).unwrap(), &model).unwrap().moments();

    let mut rng = ChaCha20Rng::seed_from_u64(99);
    let n = 1_000_000;
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let z0: f64 = StandardNormal.sample(&mut rng);
        let z1: f64 = StandardNormal.sample(&mut rng);
        let v = (1.0 + 0.5_f64.sqrt() * z0).tanh() + 0.5 * z1;
        s1 += v;
        s2 += v * v;
    }
    let mean = s1 / n as f64;
    let var = s2 / n as f64 - mean * mean;
    let se_mean = (var / n as f64).sqrt();
    let se_var = var * (2.0 / n as f64).sqrt();
    assert!((p.mean[0] - mean).abs() < 3.0 * se_mean, "{} vs {mean}", p.mean[0]);
    assert!((p.cov[(0, 0)] - var).abs() < 3.0 * se_var, "{} vs {var}", p.cov[(0, 0)]);
}

#[test]
fn lifted_data_mean_of_odd_observation_vanishes() {
    // H = tanh, mu = N(0, 1): M^y = mu[tanh] = 0 by symmetry
    let model = tanh_model();
    let ws = OperatorWorkspace::for_problem(&model, &[], Resolution::default_for(1)).unwrap();
    let mu = ws.grid_state_gaussian(&GaussianMeasure::scalar(0.0, 1.0).unwrap()).unwrap();
    let m = ws.lift(&mu, &model).unwrap().moments();
    assert!(m.mean[1].abs() < 1e-9, "{}", m.mean[1]);
    // var y = mu[tanh^2] + Gamma
    let oracle = simpson(|u| u.tanh().powi(2) * normal_pdf(u, 0.0, 1.0), -12.0, 12.0, 100_000) + 0.25;
    assert!((m.cov[(1, 1)] - oracle).abs() < 1e-4, "{} vs {oracle}", m.cov[(1, 1)]);
}

#[test]
fn true_filter_step_against_importance_sampling() {
    let delta = 0.2;
    let model = ModelSpec::sweep_family(delta);
    let y = DVector::from_element(1, 0.9);
    let ws = OperatorWorkspace::for_problem(&model, std::slice::from_ref(&y), Resolution::default_for(1)).unwrap();
    let mu0 = ws.grid_state_gaussian(&model.initial().unwrap()).unwrap();
    let post = step_true(&ws, &mu0, &model, &y).unwrap().moments();

    // sampling importance resampling without the resampling: weighted moments
    let mut rng = ChaCha20Rng::seed_from_u64(5);
    let n = 1_000_000;
    let (mut sw, mut s1, mut s2) = (0.0, 0.0, 0.0);
    for _ in 0..n {
        let z0: f64 = StandardNormal.sample(&mut rng);
        let z1: f64 = StandardNormal.sample(&mut rng);
        let u = psi_sweep(z0, delta) + 0.5 * z1;
        let w = normal_pdf(y[0], h_sweep(u, delta), 0.25);
        sw += w;
        s1 += w * u;
        s2 += w * u * u;
    }
    let mean = s1 / sw;
    let var = s2 / sw - mean * mean;
    assert!((post.mean[0] - mean).abs() < 4e-3, "{} vs {mean}", post.mean[0]);
    assert!((post.cov[(0, 0)] - var).abs() < 4e-3, "{} vs {var}", post.cov[(0, 0)]);
}

/// Scalar Kalman recursion written out by hand.
fn scalar_kalman(a: f64, h: f64, s: f64, g: f64, m0: f64, c0: f64, ys: &[f64]) -> Vec<(f64, f64)> {
    let mut out = vec![(m0, c0)];
    let (mut m, mut c) = (m0, c0);
    for &y in ys {
        let (mp, cp) = (a * m, a * a * c + s);
        let k = cp * h / (h * h * cp + g);
        m = mp + k * (y - h * mp);
        c = (1.0 - k * h) * cp;
        out.push((m, c));
    }
    out
}

#[test]
fn kalman_against_hand_recursion() {
    let model = ModelSpec::linear_scalar(0.9, 1.0, 0.25, 0.25, 0.0, 1.0).unwrap();
    let ys = [0.4, -0.3, 1.1];
    let data: Vec<DVector<f64>> = ys.iter().map(|&y| DVector::from_element(1, y)).collect();
    let lib = kalman_analytic(&model, &data).unwrap();
    let hand = scalar_kalman(0.9, 1.0, 0.25, 0.25, 0.0, 1.0, &ys);
    assert_eq!(lib.len(), 4);
    for (g, (m, c)) in lib.iter().zip(&hand) {
        assert!((g.mean()[0] - m).abs() < 1e-14);
        assert!((g.cov()[(0, 0)] - c).abs() < 1e-14);
    }
    // first two steps by hand: m1 = 1.06/1.31 * 0.4, c1 = 0.25 * 1.06 / 1.31
    assert!((hand[1].0 - 0.4 * 1.06 / 1.31).abs() < 1e-15);
    assert!((hand[1].1 - 0.25 * 1.06 / 1.31).abs() < 1e-15);
}

#[test]
fn grid_filters_match_hand_kalman_in_moments() {
    let model = ModelSpec::linear_scalar(0.8, 1.5, 0.3, 0.2, 0.5, 2.0).unwrap();
    let data = generate_data(&model, 3, 4).unwrap();
    let ys: Vec<f64> = data.data.iter().map(|y| y[0]).collect();
    let hand = scalar_kalman(0.8, 1.5, 0.3, 0.2, 0.5, 2.0, &ys);
    let ws = OperatorWorkspace::for_problem(&model, &data.data, Resolution::default_for(1)).unwrap();
    for kind in [FilterKind::True, FilterKind::EnkfMeanField, FilterKind::GpfBg] {
        let run = run_filter(kind, &model, Some(&ws), &data, 4).unwrap();
        for (m, (hm, hc)) in run.moments().iter().zip(&hand) {
            assert!((m.mean[0] - hm).abs() < 2e-3, "{kind}: {} vs {hm}", m.mean[0]);
            assert!((m.cov[(0, 0)] - hc).abs() < 2e-3, "{kind}: {} vs {hc}", m.cov[(0, 0)]);
        }
    }
}

#[test]
fn epsilon_vanishes_for_linear_lift_of_gaussian() {
    let model = ModelSpec::linear_scalar(1.0, 0.7, 0.25, 0.25, 0.0, 1.0).unwrap();
    let ws = OperatorWorkspace::for_problem(&model, &[], Resolution::default_for(1)).unwrap();
    let mu = ws.grid_state_gaussian(&GaussianMeasure::scalar(0.4, 0.6).unwrap()).unwrap();
    let eps = lifted_epsilon(&ws.lift(&mu, &model).unwrap()).unwrap();
    assert!(eps < 1e-3, "{eps}");
}
