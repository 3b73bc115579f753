//! Shallow ReLU networks `aᵀx + b + Σᵢ cᵢ σ(αᵢᵀx − tᵢ)` and their
//! importance-sampled construction from a representation oracle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{dot, norm, CompensatedSum};
use crate::relu;
use crate::representation::RepresentationOracle;
use crate::sampling::{HiddenParam, ParamDensity};

/// Above this many units evaluation switches to compensated summation.
pub const COMPENSATED_THRESHOLD: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Unit {
    pub alpha: Vec<f64>,
    pub t: f64,
    pub c: f64,
}

impl Unit {
    #[inline]
    pub fn activation(&self, x: &[f64]) -> f64 {
        relu(dot(&self.alpha, x) - self.t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReluNetwork {
    pub n: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    pub a: Vec<f64>,
    pub b: f64,
    pub units: Vec<Unit>,
}

impl ReluNetwork {
    pub fn new(radius: f64, a: Vec<f64>, b: f64, units: Vec<Unit>) -> Result<Self> {
        let n = a.len();
        if n == 0 {
            return Err(Error::invalid("network needs a positive input dimension"));
        }
        if let Some(u) = units.iter().find(|u| u.alpha.len() != n) {
            return Err(Error::invalid(format!(
                "unit weight has length {}, expected {n}",
                u.alpha.len()
            )));
        }
        Ok(Self {
            n,
            radius,
            a,
            b,
            units,
        })
    }

    /// Network with hidden layer `params` and output coefficients `c`.
    pub fn from_hidden(radius: f64, a: Vec<f64>, b: f64, params: &[HiddenParam], c: &[f64]) -> Result<Self> {
        if params.len() != c.len() {
            return Err(Error::invalid("one coefficient per hidden unit is required"));
        }
        let units = params
            .iter()
            .zip(c)
            .map(|(p, &c)| Unit {
                alpha: p.alpha.clone(),
                t: p.t,
                c,
            })
            .collect();
        Self::new(radius, a, b, units)
    }

    pub fn m(&self) -> usize {
        self.units.len()
    }

    pub fn hidden_params(&self) -> Vec<HiddenParam> {
        self.units
            .iter()
            .map(|u| HiddenParam {
                alpha: u.alpha.clone(),
                t: u.t,
            })
            .collect()
    }

    pub fn evaluate(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        let affine = dot(&self.a, x) + self.b;
        if self.units.len() > COMPENSATED_THRESHOLD {
            let mut s: CompensatedSum = self.units.iter().map(|u| u.c * u.activation(x)).collect();
            s.add(affine);
            s.value()
        } else {
            affine + self.units.iter().map(|u| u.c * u.activation(x)).sum::<f64>()
        }
    }

    pub fn evaluate_many(&self, xs: &[Vec<f64>], exec: Execution) -> Vec<f64> {
        exec.map_slice(xs, |x| self.evaluate(x))
    }

    /// `‖a‖ + Σ|cᵢ|`, a global Lipschitz constant (σ is 1-Lipschitz, ‖αᵢ‖ = 1).
    pub fn lipschitz_bound(&self) -> f64 {
        norm(&self.a) + self.units.iter().map(|u| u.c.abs()).sum::<f64>()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let net: Self = serde_json::from_str(s)?;
        Self::new(net.radius, net.a, net.b, net.units)
    }
}

/// Importance-sampled network: `m` hidden units from `dist`, coefficients
/// `cᵢ = h(αᵢ,tᵢ)q(αᵢ) / (m P(αᵢ,tᵢ))` read from the oracle's lattice, and the
/// oracle's affine part.
pub fn build_importance_network<D: ParamDensity>(
    oracle: &RepresentationOracle,
    dist: &D,
    m: usize,
    seed: u64,
) -> Result<ReluNetwork> {
    build_importance_network_with(oracle, dist, m, seed, Execution::default())
}

pub fn build_importance_network_with<D: ParamDensity>(
    oracle: &RepresentationOracle,
    dist: &D,
    m: usize,
    seed: u64,
    exec: Execution,
) -> Result<ReluNetwork> {
    if m == 0 {
        return Err(Error::invalid("importance network needs m ≥ 1"));
    }
    let params = dist.sample_hidden_params_with(m, seed, exec);
    importance_coefficients(oracle, dist, &params, exec)
}

/// Importance coefficients for given hidden parameters.
pub fn importance_coefficients<D: ParamDensity>(
    oracle: &RepresentationOracle,
    dist: &D,
    params: &[HiddenParam],
    exec: Execution,
) -> Result<ReluNetwork> {
    if dist.dim() != oracle.dim() {
        return Err(Error::invalid(format!(
            "distribution dimension {} does not match oracle dimension {}",
            dist.dim(),
            oracle.dim()
        )));
    }
    if (dist.radius() - oracle.radius).abs() > 1e-12 * oracle.radius {
        return Err(Error::invalid(format!(
            "distribution radius {} does not match oracle radius {}",
            dist.radius(),
            oracle.radius
        )));
    }
    let m = params.len() as f64;
    let coeffs = exec.map_slice(params, |p| -> Result<f64> {
        let hq = oracle.kernel_hq(&p.alpha, p.t)?;
        Ok(hq / (m * dist.density_value(&p.alpha, p.t)?))
    });
    let c = coeffs.into_iter().collect::<Result<Vec<_>>>()?;
    ReluNetwork::from_hidden(oracle.radius, oracle.a.clone(), oracle.b, params, &c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::representation::OracleOptions;
    use crate::sampling::HiddenParamDistribution;
    use crate::targets::{gaussian_target, sphere_area};
    use proptest::prelude::*;
    use std::f64::consts::PI;
    use std::sync::OnceLock;

    fn oracle() -> &'static RepresentationOracle {
        static O: OnceLock<RepresentationOracle> = OnceLock::new();
        O.get_or_init(|| {
            RepresentationOracle::build(&gaussian_target(1, 4).unwrap(), 1.0, OracleOptions::with_tol(1e-5))
                .unwrap()
        })
    }

    fn unit(alpha: f64, t: f64, c: f64) -> Unit {
        Unit {
            alpha: vec![alpha],
            t,
            c,
        }
    }

    #[test]
    fn evaluate_examples() {
        let net = ReluNetwork::new(1.0, vec![0.0], 0.0, vec![unit(1.0, 0.0, 1.0)]).unwrap();
        assert_eq!(net.evaluate(&[0.5]), 0.5);
        let affine = ReluNetwork::new(1.0, vec![2.0], -1.0, vec![]).unwrap();
        assert_eq!(affine.evaluate(&[0.25]), -0.5);
        let off = ReluNetwork::new(1.0, vec![0.0], 0.0, vec![unit(1.0, 0.7, 3.0)]).unwrap();
        assert_eq!(off.evaluate(&[0.5]), 0.0);
    }

    #[test]
    fn json_layout() {
        let net = ReluNetwork::new(2.0, vec![0.5], 1.0, vec![unit(-1.0, 0.25, 3.0)]).unwrap();
        let v: serde_json::Value = serde_json::from_str(&net.to_json().unwrap()).unwrap();
        assert_eq!(v["n"], 1);
        assert_eq!(v["R"], 2.0);
        assert_eq!(v["units"][0]["alpha"][0], -1.0);
        assert_eq!(v["units"][0]["c"], 3.0);
        assert_eq!(ReluNetwork::from_json(&net.to_json().unwrap()).unwrap(), net);
    }

    #[test]
    fn compensated_path_matches_plain_sum() {
        let units: Vec<Unit> = (0..20_000)
            .map(|i| unit(if i % 2 == 0 { 1.0 } else { -1.0 }, -0.5 + (i as f64) / 40_000.0, 1e-3 * ((i % 7) as f64 - 3.0)))
            .collect();
        let net = ReluNetwork::new(1.0, vec![0.3], 0.1, units.clone()).unwrap();
        let x = [0.37];
        let exact: CompensatedSum = units.iter().map(|u| u.c * u.activation(&x)).collect();
        assert!((net.evaluate(&x) - (exact.value() + 0.3 * 0.37 + 0.1)).abs() < 1e-13);
    }

    #[test]
    fn coefficient_boxes_hold() {
        let o = oracle();
        let dist = HiddenParamDistribution::uniform(1, 1.0).unwrap();
        let rho = o.target.rho;
        let area = sphere_area(1).unwrap();
        for m in [1, 25, 400] {
            let net = build_importance_network(o, &dist, m, 3).unwrap();
            assert!(norm(&net.a) <= 4.0 * PI * area * rho);
            assert!(net.b.abs() <= (1.0 + 2.0 * PI) * area * rho);
            let cap = 8.0 * PI * PI * rho / (m as f64 * dist.p_min);
            let cap_uniform = 16.0 * PI * PI * rho * area / m as f64;
            for u in &net.units {
                assert!(u.c.abs() <= cap && u.c.abs() <= cap_uniform * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn importance_mean_matches_ridge_integral() {
        // Monte Carlo mean of m·cᵢσ(αᵢx − tᵢ) against the quadrature value
        let o = oracle();
        let dist = HiddenParamDistribution::uniform(1, 1.0).unwrap();
        let m = 200_000;
        let net = build_importance_network(o, &dist, m, 17).unwrap();
        for x in [-0.6, 0.0, 0.45] {
            let samples: Vec<f64> = net.units.iter().map(|u| m as f64 * u.c * u.activation(&[x])).collect();
            let mean = samples.iter().sum::<f64>() / m as f64;
            let var = samples.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (m as f64 - 1.0);
            let se = (var / m as f64).sqrt();
            let exact = o.ridge_part(&[x]).unwrap();
            assert!((mean - exact).abs() < 4.0 * se + 1e-4, "x={x}: {mean} vs {exact} (se {se})");
        }
    }

    #[test]
    fn rejects_mismatched_distribution() {
        let o = oracle();
        let d2 = HiddenParamDistribution::uniform(2, 1.0).unwrap();
        assert!(build_importance_network(o, &d2, 10, 0).is_err());
        let wide = HiddenParamDistribution::uniform(1, 2.0).unwrap();
        assert!(build_importance_network(o, &wide, 10, 0).is_err());
    }

    /// A non-uniform density: linear tilt in t, still strictly positive.
    struct Tilted(HiddenParamDistribution);

    impl ParamDensity for Tilted {
        fn dim(&self) -> usize {
            1
        }
        fn radius(&self) -> f64 {
            1.0
        }
        fn p_min(&self) -> f64 {
            0.25 * 0.5
        }
        fn density_value(&self, alpha: &[f64], t: f64) -> Result<f64> {
            self.check_support(alpha, t)?;
            Ok(0.25 * (1.0 + 0.5 * t))
        }
        fn sample_one(&self, seed: u64, index: u64) -> HiddenParam {
            // inverse CDF of g(t) = (1 + t/2)/2 on [−1, 1]: t = −2 + √(1 + 8v)
            let u = self.0.sample_one(seed, index);
            let v = (u.t + 1.0) / 2.0;
            let t = (-2.0 + (1.0 + 8.0 * v).sqrt()).clamp(-1.0, 1.0);
            HiddenParam { alpha: u.alpha, t }
        }
    }

    #[test]
    fn general_density_keeps_coefficient_box() {
        let o = oracle();
        let d = Tilted(HiddenParamDistribution::uniform(1, 1.0).unwrap());
        let m = 300;
        let net = build_importance_network(o, &d, m, 8).unwrap();
        let cap = 8.0 * PI * PI * o.target.rho / (m as f64 * d.p_min());
        assert!(net.units.iter().all(|u| u.c.abs() <= cap));
    }

    proptest! {
        #[test]
        fn lipschitz_bound_holds(
            params in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -3.0f64..3.0), 0..40),
            a in -2.0f64..2.0, b in -2.0f64..2.0,
            x in -3.0f64..3.0, y in -3.0f64..3.0,
        ) {
            let units = params.iter().map(|&(s, t, c)| unit(if s >= 0.0 { 1.0 } else { -1.0 }, t, c)).collect();
            let net = ReluNetwork::new(1.0, vec![a], b, units).unwrap();
            let lhs = (net.evaluate(&[x]) - net.evaluate(&[y])).abs();
            prop_assert!(lhs <= net.lipschitz_bound() * (x - y).abs() + 1e-12);
        }

        #[test]
        fn linear_between_breakpoints(
            params in proptest::collection::vec((-1.0f64..1.0, -1.0f64..1.0, -3.0f64..3.0, -1.0f64..1.0), 1..20),
            x0 in -1.0f64..1.0, x1 in -1.0f64..1.0, d0 in -1.0f64..1.0, d1 in -1.0f64..1.0,
        ) {
            let units: Vec<Unit> = params.iter().map(|&(p, q, c, t)| {
                let l = (p * p + q * q).sqrt();
                let alpha = if l < 1e-6 { vec![1.0, 0.0] } else { vec![p / l, q / l] };
                Unit { alpha, t, c }
            }).collect();
            let net = ReluNetwork::new(1.0, vec![0.2, -0.1], 0.3, units).unwrap();
            let x = [x0, x1];
            let d = [d0, d1];
            // sign changes of αᵢᵀ(x+sd) − tᵢ happen at sᵢ = (tᵢ − αᵢᵀx)/αᵢᵀd
            let mut breaks: Vec<f64> = net.units.iter().filter_map(|u| {
                let ad = dot(&u.alpha, &d);
                (ad.abs() > 1e-12).then(|| (u.t - dot(&u.alpha, &x)) / ad)
            }).filter(|s| s.abs() < 1.0).collect();
            breaks.push(-1.0);
            breaks.push(1.0);
            breaks.sort_by(f64::total_cmp);
            let at = |s: f64| net.evaluate(&[x0 + s * d0, x1 + s * d1]);
            for w in breaks.windows(2) {
                if w[1] - w[0] < 1e-6 { continue; }
                let (s0, s1) = (w[0], w[1]);
                let mid = 0.5 * (s0 + s1);
                let lin = 0.5 * (at(s0) + at(s1));
                prop_assert!((at(mid) - lin).abs() < 1e-9);
            }
        }
    }
}
