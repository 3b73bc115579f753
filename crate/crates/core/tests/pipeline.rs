//! End-to-end checks through the public API: target, oracle, sampled
//! network, least-squares refit and certified sup error.

use proptest::prelude::*;
use randrelu::analysis::{coefficient_boxes, sup_error, sup_error_with, theorem1_bound, ErrorBoundInputs};
use randrelu::fitting::{least_squares_fit, FitProblem};
use randrelu::network::{build_importance_network, build_importance_network_with, ReluNetwork};
use randrelu::representation::{OracleOptions, RepresentationOracle};
use randrelu::targets::{gaussian_target, GaussianComponent, SmoothTarget};
use randrelu::{Execution, HiddenParamDistribution, ParamDensity};

fn mixture_1d() -> SmoothTarget {
    SmoothTarget::mixture(
        1,
        4,
        vec![
            GaussianComponent {
                weight: 1.0,
                width: 0.5,
                center: vec![-0.3],
            },
            GaussianComponent {
                weight: -0.6,
                width: 0.8,
                center: vec![0.4],
            },
        ],
    )
    .unwrap()
}

fn grid(radius: f64, points: usize) -> Vec<Vec<f64>> {
    (0..points)
        .map(|i| vec![-radius + 2.0 * radius * i as f64 / (points - 1) as f64])
        .collect()
}

#[test]
fn reconstruction_holds_for_every_radius() {
    let tol = 1e-3;
    for target in [gaussian_target(1, 4).unwrap(), mixture_1d()] {
        for radius in [0.5, 1.0, 2.0] {
            let oracle = RepresentationOracle::build(&target, radius, OracleOptions::with_tol(tol)).unwrap();
            let xs = grid(radius, 101);
            let v = oracle
                .reconstruct_many(&xs, oracle.resolution, Execution::default())
                .unwrap();
            let err = xs
                .iter()
                .zip(&v)
                .map(|(x, v)| (v - target.value(x)).abs())
                .fold(0.0, f64::max);
            assert!(err <= tol, "R = {radius}: {err:e}");
        }
    }
}

#[test]
fn refinement_moves_values_by_less_than_tol() {
    let tol = 1e-4;
    let oracle = RepresentationOracle::build(&mixture_1d(), 1.0, OracleOptions::with_tol(tol)).unwrap();
    let xs = grid(1.0, 41);
    let coarse = oracle
        .reconstruct_many(&xs, oracle.resolution, Execution::Sequential)
        .unwrap();
    let fine = oracle
        .reconstruct_many(&xs, oracle.resolution.refined(), Execution::Sequential)
        .unwrap();
    for (a, b) in coarse.iter().zip(&fine) {
        assert!((a - b).abs() < tol);
    }
}

#[test]
fn oracle_survives_json() {
    let oracle = RepresentationOracle::build(&mixture_1d(), 1.0, OracleOptions::with_tol(1e-3)).unwrap();
    let back = RepresentationOracle::from_json(&oracle.to_json().unwrap()).unwrap();
    for x in [-0.9, -0.2, 0.0, 0.7] {
        assert_eq!(oracle.reconstruct(&[x]).unwrap(), back.reconstruct(&[x]).unwrap());
    }
}

#[test]
fn execution_modes_give_identical_results() {
    let oracle = RepresentationOracle::build(&gaussian_target(1, 4).unwrap(), 1.0, OracleOptions::with_tol(1e-4))
        .unwrap();
    let dist = HiddenParamDistribution::uniform(1, 1.0).unwrap();
    let seq = build_importance_network_with(&oracle, &dist, 300, 11, Execution::Sequential).unwrap();
    let par = build_importance_network_with(&oracle, &dist, 300, 11, Execution::Parallel).unwrap();
    assert_eq!(seq, par);
    let target = &oracle.target;
    let a = sup_error_with(&seq, target, 1.0, 2001, Execution::Sequential).unwrap();
    let b = sup_error_with(&seq, target, 1.0, 2001, Execution::Parallel).unwrap();
    assert_eq!(a, b);
}

#[test]
fn importance_network_then_refit() {
    let target = mixture_1d();
    let oracle = RepresentationOracle::build(&target, 1.0, OracleOptions::with_tol(1e-4)).unwrap();
    let dist = HiddenParamDistribution::uniform(1, 1.0).unwrap();
    let m = 200;
    let net = build_importance_network(&oracle, &dist, m, 5).unwrap();
    assert_eq!(coefficient_boxes(&net, target.rho, dist.p_min()).unwrap().violations, 0);

    let imp = sup_error(&net, &target, 1.0, 20_001).unwrap();
    let bound = theorem1_bound(&ErrorBoundInputs::uniform(1, 1.0, target.rho, m, 0.1).unwrap()).unwrap();
    assert!(imp.certified_bound <= bound);

    let mut problem = FitProblem::from_function(1, 1.0, net.hidden_params(), |x| target.value(x)).unwrap();
    problem.ridge = 0.0;
    let fit = least_squares_fit(&problem).unwrap();
    let ls = sup_error(&fit.network, &target, 1.0, 20_001).unwrap();
    assert!(ls.estimate < imp.estimate);

    // optimality on the sample set: the importance coefficients are one candidate
    let rms = |net: &ReluNetwork| {
        let ss: f64 = problem
            .sample_points
            .iter()
            .zip(&problem.sample_values)
            .map(|(x, y)| (net.evaluate(x) - y).powi(2))
            .sum();
        (ss / problem.sample_points.len() as f64).sqrt()
    };
    assert!(rms(&fit.network) <= rms(&net) * (1.0 + 1e-12));
    assert!((rms(&fit.network) - fit.report.rms_residual).abs() <= 1e-12);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn networks_survive_json(m in 1usize..40, seed in any::<u64>(), scale in 0.1f64..10.0) {
        let dist = HiddenParamDistribution::uniform(2, 1.5).unwrap();
        let params = dist.sample_hidden_params(m, seed);
        let c: Vec<f64> = (0..m).map(|i| scale * ((i as f64) - m as f64 / 2.0)).collect();
        let net = ReluNetwork::from_hidden(1.5, vec![0.25, -scale], 0.5, &params, &c).unwrap();
        let back = ReluNetwork::from_json(&net.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back, &net);
    }

    #[test]
    fn certified_bound_dominates_the_grid(m in 5usize..60, seed in 0u64..1000) {
        let target = gaussian_target(1, 4).unwrap();
        let dist = HiddenParamDistribution::uniform(1, 1.0).unwrap();
        let params = dist.sample_hidden_params(m, seed);
        let c = vec![1.0 / m as f64; m];
        let net = ReluNetwork::from_hidden(1.0, vec![0.0], 0.0, &params, &c).unwrap();
        let coarse = sup_error(&net, &target, 1.0, 101).unwrap();
        let fine = sup_error(&net, &target, 1.0, 10_001).unwrap();
        prop_assert!(coarse.certified_bound >= coarse.estimate);
        prop_assert!(coarse.certified_bound >= fine.estimate);
    }

    #[test]
    fn samples_depend_only_on_seed_and_index(seed in any::<u64>(), m in 1usize..200) {
        let dist = HiddenParamDistribution::uniform(3, 2.0).unwrap();
        let all = dist.sample_hidden_params_with(m, seed, Execution::Parallel);
        prop_assert_eq!(&all, &dist.sample_hidden_params_with(m, seed, Execution::Sequential));
        for (i, p) in all.iter().enumerate() {
            prop_assert_eq!(p, &dist.sample_one(seed, i as u64));
            let norm = p.alpha.iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12 && p.t.abs() <= 2.0);
        }
    }
}
