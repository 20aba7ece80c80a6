use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

use filtermaps::density::{
    dg_distance, gaussian_projection, kl_to_gaussian, read_binary, write_binary, Grid, GridDensity,
};
use filtermaps::filters::generate_data;
use filtermaps::gaussian::{dg_upper_bound, kl_divergence, BlockStructure, GaussianMeasure};
use filtermaps::model::validate_assumptions;
use filtermaps::operators::{OperatorWorkspace, Resolution};
use filtermaps::{FilterKind, MapFamily, ModelSpec};

type Component = (f64, f64, f64);

fn component() -> impl Strategy<Value = Component> {
    (0.2..1.0_f64, -2.0..2.0_f64, 0.1..1.5_f64)
}

fn mixture() -> impl Strategy<Value = Vec<Component>> {
    prop::collection::vec(component(), 1..=3)
}

fn on_grid(grid: &Grid, comps: &[Component]) -> GridDensity {
    let gs: Vec<(f64, GaussianMeasure)> = comps
        .iter()
        .map(|&(w, m, v)| (w, GaussianMeasure::scalar(m, v).unwrap()))
        .collect();
    GridDensity::from_fn(grid.clone(), |x| {
        gs.iter()
            .map(|(w, g)| w * (g.log_normalizer() - 0.5 * g.mahalanobis_sq(x)).exp())
            .sum()
    })
    .unwrap()
}

fn line() -> &'static Grid {
    static GRID: OnceLock<Grid> = OnceLock::new();
    GRID.get_or_init(|| Grid::cube(1, 10.0, 1024).unwrap())
}

fn bounded() -> &'static (ModelSpec, OperatorWorkspace) {
    static WS: OnceLock<(ModelSpec, OperatorWorkspace)> = OnceLock::new();
    WS.get_or_init(|| {
        let model = ModelSpec::default_bounded();
        let ws = OperatorWorkspace::for_problem(&model, &[], Resolution::default_for(1)).unwrap();
        (model, ws)
    })
}

/// Scalar joint from eigenvalues, rotation angle and mean.
fn joint(l1: f64, l2: f64, theta: f64, m: (f64, f64)) -> GaussianMeasure {
    let (c, s) = (theta.cos(), theta.sin());
    let r = DMatrix::from_row_slice(2, 2, &[c, -s, s, c]);
    let cov = &r * DMatrix::from_diagonal(&DVector::from_column_slice(&[l1, l2])) * r.transpose();
    GaussianMeasure::new(DVector::from_column_slice(&[m.0, m.1]), cov).unwrap()
}

fn gaussian_1d() -> impl Strategy<Value = GaussianMeasure> {
    (-1.0..1.0_f64, 0.3..3.0_f64).prop_map(|(m, v)| GaussianMeasure::scalar(m, v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn condition_matches_scalar_formula(
        l1 in 0.3..3.0_f64, l2 in 0.3..3.0_f64, theta in 0.0..3.2_f64,
        mu in -1.0..1.0_f64, my in -1.0..1.0_f64, y in -2.0..2.0_f64,
    ) {
        let g = joint(l1, l2, theta, (mu, my));
        let c = g.cov();
        let post = g.condition(&BlockStructure::new(1, 1).unwrap(), &DVector::from_element(1, y)).unwrap();
        let m = mu + c[(0, 1)] / c[(1, 1)] * (y - my);
        let v = c[(0, 0)] - c[(0, 1)] * c[(0, 1)] / c[(1, 1)];
        prop_assert!((post.mean()[0] - m).abs() < 1e-12);
        prop_assert!((post.cov()[(0, 0)] - v).abs() < 1e-12);
        // the posterior covariance passes a fresh Cholesky check
        prop_assert!(GaussianMeasure::new(post.mean().clone(), post.cov().clone()).is_ok());
    }

    #[test]
    fn kl_nonnegative_and_zero_on_diagonal(a in gaussian_1d(), b in gaussian_1d()) {
        prop_assert!(kl_divergence(&a, &b).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&a, &a).unwrap().abs() < 1e-12);
    }

    #[test]
    fn pinsker_and_gaussian_bound(a in gaussian_1d(), b in gaussian_1d()) {
        let grid = Grid::cube(1, 14.0, 2048).unwrap();
        let ga = GridDensity::from_gaussian(&a, &grid).unwrap();
        let gb = GridDensity::from_gaussian(&b, &grid).unwrap();
        let dg = dg_distance(&ga, &gb).unwrap();
        let g2 = a.moment_g2() + b.moment_g2();
        prop_assert!(dg * dg <= 2.0 * g2 * kl_to_gaussian(&ga, &b).unwrap() + 1e-9);
        prop_assert!(dg <= dg_upper_bound(&a, &b).unwrap() + 1e-9);
    }

    #[test]
    fn dg_is_a_metric(a in mixture(), b in mixture(), c in mixture()) {
        let (a, b, c) = (on_grid(line(), &a), on_grid(line(), &b), on_grid(line(), &c));
        let ab = dg_distance(&a, &b).unwrap();
        prop_assert_eq!(ab, dg_distance(&b, &a).unwrap());
        prop_assert_eq!(dg_distance(&a, &a).unwrap(), 0.0);
        prop_assert!(dg_distance(&a, &c).unwrap() <= ab + dg_distance(&b, &c).unwrap() + 1e-12);
    }

    #[test]
    fn moment_differences_bounded(a in mixture(), b in mixture()) {
        let (a, b) = (on_grid(line(), &a), on_grid(line(), &b));
        let d = dg_distance(&a, &b).unwrap();
        let (ma, mb) = (a.moments(), b.moments());
        prop_assert!((&ma.mean - &mb.mean).norm() <= 0.5 * d + 1e-6);
        let factor = 1.0 + 0.5 * (&ma.mean + &mb.mean).norm();
        prop_assert!((&ma.cov - &mb.cov).abs().max() <= factor * d + 1e-6);
    }

    #[test]
    fn projection_idempotent_and_kl_minimal(a in mixture(), dm in -0.3..0.3_f64, dv in -0.3..0.3_f64) {
        // wide enough for six standard deviations of any projection
        let grid = Grid::cube(1, 18.0, 2048).unwrap();
        let mu = on_grid(&grid, &a);
        let g = gaussian_projection(&mu).unwrap();
        let again = gaussian_projection(&GridDensity::from_gaussian(&g, &grid).unwrap()).unwrap();
        prop_assert!((g.mean() - again.mean()).amax() < 1e-6);
        prop_assert!((g.cov() - again.cov()).amax() < 1e-6);
        let v = g.cov()[(0, 0)];
        let nu = GaussianMeasure::scalar(g.mean()[0] + dm, v * (1.0 + dv)).unwrap();
        prop_assert!(kl_to_gaussian(&mu, &nu).unwrap() >= kl_to_gaussian(&mu, &g).unwrap() - 1e-9);
    }

    #[test]
    fn binary_round_trip(a in mixture()) {
        let mu = on_grid(line(), &a);
        let mut bytes = Vec::new();
        write_binary(&mu, &mut bytes).unwrap();
        prop_assert_eq!(read_binary(bytes.as_slice()).unwrap(), mu);
    }

    #[test]
    fn data_stay_within_recorded_bound(seed in any::<u64>(), steps in 0usize..8) {
        let t = generate_data(&ModelSpec::default_bounded(), steps, seed).unwrap();
        prop_assert_eq!(t.data.len(), steps);
        prop_assert!(t.data.iter().all(|y| y.norm() <= t.kappa_y));
    }

    #[test]
    fn model_config_round_trip(
        scale in 0.1..2.0_f64, delta in -0.5..0.5_f64, freq in 0.5..4.0_f64,
        sigma in 0.05..2.0_f64, gamma in 0.05..2.0_f64, m0 in -1.0..1.0_f64, s0 in 0.1..3.0_f64,
    ) {
        let m = ModelSpec::scalar(
            MapFamily::TanhSin { scale, delta, frequency: freq },
            MapFamily::BoundedRational { scale, delta },
            sigma, gamma, m0, s0,
        ).unwrap();
        prop_assert_eq!(ModelSpec::from_toml(&m.to_toml()).unwrap(), m);
    }

    #[test]
    fn filter_kind_names_round_trip(n in 1usize..100_000) {
        for k in [FilterKind::True, FilterKind::EnkfMeanField, FilterKind::GpfBg,
                  FilterKind::GpfGt, FilterKind::Kalman, FilterKind::EnkfParticles(n)] {
            prop_assert_eq!(k.to_string().parse::<FilterKind>().unwrap(), k);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn operators_lipschitz_linear_and_mass_preserving(a in mixture(), b in mixture(), alpha in 0.0..1.0_f64) {
        let (model, ws) = bounded();
        let grid = ws.state_grid_ref();
        let (mu, nu) = (on_grid(grid, &a), on_grid(grid, &b));
        let kp = model.kappa_psi().unwrap();
        let kh = model.kappa_h().unwrap();
        let lp = 1.0 + kp * kp + model.sigma.trace();
        let lq = 1.0 + kh * kh + model.gamma.trace();
        let d = dg_distance(&mu, &nu).unwrap();
        let (pmu, pnu) = (ws.predict(&mu, model).unwrap(), ws.predict(&nu, model).unwrap());
        let (qmu, qnu) = (ws.lift(&mu, model).unwrap(), ws.lift(&nu, model).unwrap());
        prop_assert!(dg_distance(&pmu, &pnu).unwrap() <= lp * d + 1e-3);
        prop_assert!(dg_distance(&qmu, &qnu).unwrap() <= lq * d + 1e-3);
        let mix = GridDensity::mix(&mu, &nu, alpha).unwrap();
        let lin_p = dg_distance(&ws.predict(&mix, model).unwrap(), &GridDensity::mix(&pmu, &pnu, alpha).unwrap()).unwrap();
        let lin_q = dg_distance(&ws.lift(&mix, model).unwrap(), &GridDensity::mix(&qmu, &qnu, alpha).unwrap()).unwrap();
        prop_assert!(lin_p < 1e-6 && lin_q < 1e-6);
        for out in [&pmu, &pnu, &qmu, &qnu] {
            prop_assert!((out.mass() - 1.0).abs() < 1e-8);
        }
    }
}

#[test]
fn probe_certificates_are_reproducible() {
    for model in [ModelSpec::default_bounded(), ModelSpec::sweep_family(0.3)] {
        let a = validate_assumptions(&model);
        let b = validate_assumptions(&model);
        assert_eq!(a, b);
        assert!(a.all_passed());
    }
}
