//! Adaptive-control checks through the public API.

use nalgebra::DMatrix;
use proptest::prelude::*;
use randrelu::mrac::lyapunov::{is_hurwitz, lyapunov_residual, norm2, spectral_abscissa};
use randrelu::mrac::scenario::{check_fallback, MracScenario};
use randrelu::mrac::sim::{blend_weight, ReferenceInput};
use randrelu::mrac::{tracking_ultimate_bound, MracSystem, Nonlinearity};

fn matrix(n: usize, m: usize, v: &[f64]) -> DMatrix<f64> {
    DMatrix::from_row_slice(n, m, &v[..n * m])
}

#[test]
fn scenarios_survive_json() {
    for sc in [MracScenario::scalar_testbed(), MracScenario::planar_testbed()] {
        let text = serde_json::to_string(&sc).unwrap();
        assert_eq!(MracScenario::from_json(&text).unwrap(), sc);
        sc.validate().unwrap();
    }
}

#[test]
fn testbeds_admit_a_stabilising_fallback() {
    for sc in [MracScenario::scalar_testbed(), MracScenario::planar_testbed()] {
        let sys = sc.system().unwrap();
        check_fallback(&sys, sc.fallback_gain).unwrap();
        let (rx, rr) = sys.matching_residuals();
        assert!(rx < 1e-10 && rr < 1e-10);
    }
}

#[test]
fn unmatched_reference_model_is_rejected() {
    // B spans the second axis only, so A_r may not differ from A in the first row
    let a = matrix(2, 2, &[0.0, 1.0, -1.0, 1.0]);
    let b = matrix(2, 1, &[0.0, 1.0]);
    let a_r = matrix(2, 2, &[-1.0, 1.0, -2.0, -3.0]);
    let b_r = matrix(2, 1, &[0.0, 2.0]);
    let r = MracSystem::new(a, b, a_r, b_r, DMatrix::identity(2, 2), Nonlinearity::Zero { outputs: 1 });
    assert!(r.is_err());
}

#[test]
fn ultimate_bound_is_linear_in_eps0() {
    let sys = MracScenario::planar_testbed().system().unwrap();
    let one = tracking_ultimate_bound(&sys.p, &sys.q, 1.0).unwrap();
    for eps0 in [0.0, 0.01, 0.3, 7.0] {
        let b = tracking_ultimate_bound(&sys.p, &sys.q, eps0).unwrap();
        assert!((b - one * eps0).abs() <= 1e-14 * one.max(b));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Companion-form plants are always matched by a companion-form model.
    #[test]
    fn companion_systems_match(
        plant in prop::collection::vec(-3.0f64..3.0, 3),
        poles in prop::collection::vec(0.2f64..4.0, 3),
        gain in 0.5f64..3.0,
    ) {
        let n = 3;
        let companion = |last: &[f64]| {
            let mut a = DMatrix::zeros(n, n);
            for i in 0..n - 1 {
                a[(i, i + 1)] = 1.0;
            }
            for j in 0..n {
                a[(n - 1, j)] = last[j];
            }
            a
        };
        // (s + p0)(s + p1)(s + p2) gives the last row of a Hurwitz companion matrix
        let (p0, p1, p2) = (poles[0], poles[1], poles[2]);
        let coeffs = [-(p0 * p1 * p2), -(p0 * p1 + p0 * p2 + p1 * p2), -(p0 + p1 + p2)];
        let a = companion(&plant);
        let a_r = companion(&coeffs);
        prop_assert!(is_hurwitz(&a_r));
        let mut b = DMatrix::zeros(n, 1);
        b[(n - 1, 0)] = 1.0;
        let b_r = &b * gain;
        let q = DMatrix::identity(n, n);
        let sys = MracSystem::new(a, b, a_r.clone(), b_r, q.clone(), Nonlinearity::Zero { outputs: 1 }).unwrap();
        let (rx, rr) = sys.matching_residuals();
        prop_assert!(rx < 1e-10 && rr < 1e-10);
        prop_assert!(lyapunov_residual(&a_r, &sys.p, &q) < 1e-10 * norm2(&q));
        prop_assert!(spectral_abscissa(&a_r) < 0.0);
    }

    #[test]
    fn blend_weight_stays_in_unit_interval(x in prop::collection::vec(-5.0f64..5.0, 1..4), radius in 0.1f64..3.0) {
        let mu = blend_weight(&x, radius);
        prop_assert!((0.0..=1.0).contains(&mu));
        let r = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if r <= radius {
            prop_assert_eq!(mu, 0.0);
        }
        if r >= 1.25 * radius {
            prop_assert_eq!(mu, 1.0);
        }
    }

    #[test]
    fn square_wave_takes_two_values(t in 0.0f64..100.0, amplitude in 0.1f64..3.0, period in 0.5f64..20.0) {
        let r = ReferenceInput::SquareWave { amplitude: vec![amplitude], period };
        let v = r.value(t)[0];
        prop_assert!(v == amplitude || v == -amplitude);
        prop_assert_eq!(r.value(t + period)[0], v);
    }
}
