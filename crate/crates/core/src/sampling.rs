//! Densities over `S^{n-1} × [−R, R]` for the hidden-layer parameters.
//!
//! Draws are made per neuron from independent ChaCha streams
//! (`seed`, stream = neuron index), so the map `(seed, m) → samples` does not
//! depend on how the work is split across threads, and the first `m` draws of
//! a larger sample coincide with a sample of size `m`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::norm;
use crate::representation::{random_unit, UNIT_TOL};
use crate::targets::sphere_area;

/// One hidden unit's weight direction and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenParam {
    pub alpha: Vec<f64>,
    pub t: f64,
}

/// A strictly positive probability density on `S^{n-1} × [−R, R]`.
pub trait ParamDensity: Sync {
    fn dim(&self) -> usize;
    fn radius(&self) -> f64;
    /// Infimum of the density over the support.
    fn p_min(&self) -> f64;
    /// Density at `(α, t)` with respect to `μ_{n-1} ⊗ dt`.
    fn density_value(&self, alpha: &[f64], t: f64) -> Result<f64>;
    /// Draw for neuron `index` from its own stream.
    fn sample_one(&self, seed: u64, index: u64) -> HiddenParam;

    fn sample_hidden_params(&self, m: usize, seed: u64) -> Vec<HiddenParam> {
        self.sample_hidden_params_with(m, seed, Execution::default())
    }

    fn sample_hidden_params_with(&self, m: usize, seed: u64, exec: Execution) -> Vec<HiddenParam> {
        exec.map_range(m, |i| self.sample_one(seed, i as u64))
    }

    /// Shared support check for implementors.
    fn check_support(&self, alpha: &[f64], t: f64) -> Result<()> {
        if alpha.len() != self.dim() {
            return Err(Error::invalid(format!(
                "direction has length {}, expected {}",
                alpha.len(),
                self.dim()
            )));
        }
        if (norm(alpha) - 1.0).abs() > UNIT_TOL {
            return Err(Error::invalid("direction is not a unit vector"));
        }
        if t.is_nan() || t.abs() > self.radius() {
            return Err(Error::invalid(format!(
                "bias {t} outside [−{r}, {r}]",
                r = self.radius()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistributionKind {
    Uniform,
}

/// Uniform `α` on the sphere and uniform `t` on `[−R, R]`; density
/// `1 / (2R A_{n-1})`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HiddenParamDistribution {
    pub n: usize,
    pub radius: f64,
    pub kind: DistributionKind,
    pub p_min: f64,
}

impl HiddenParamDistribution {
    pub fn uniform(n: usize, radius: f64) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid(format!("radius must be positive, got {radius}")));
        }
        let p = 1.0 / (2.0 * radius * sphere_area(n)?);
        Ok(Self {
            n,
            radius,
            kind: DistributionKind::Uniform,
            p_min: p,
        })
    }

    fn stream(seed: u64, index: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(index);
        rng
    }
}

impl ParamDensity for HiddenParamDistribution {
    fn dim(&self) -> usize {
        self.n
    }

    fn radius(&self) -> f64 {
        self.radius
    }

    fn p_min(&self) -> f64 {
        self.p_min
    }

    fn density_value(&self, alpha: &[f64], t: f64) -> Result<f64> {
        self.check_support(alpha, t)?;
        Ok(self.p_min)
    }

    fn sample_one(&self, seed: u64, index: u64) -> HiddenParam {
        let mut rng = Self::stream(seed, index);
        // random_unit redraws on a zero-norm Gaussian vector
        let alpha = random_unit(&mut rng, self.n);
        let t = rng.random_range(-self.radius..=self.radius);
        HiddenParam { alpha, t }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn uniform_density_values() {
        let d = HiddenParamDistribution::uniform(1, 1.0).unwrap();
        assert_relative_eq!(d.density_value(&[1.0], 0.3).unwrap(), 0.25, epsilon = 1e-15);
        let d = HiddenParamDistribution::uniform(2, 1.0).unwrap();
        assert_relative_eq!(d.density_value(&[0.0, 1.0], -1.0).unwrap(), 1.0 / (4.0 * PI), epsilon = 1e-15);
        let d = HiddenParamDistribution::uniform(1, 2.0).unwrap();
        assert_relative_eq!(d.density_value(&[-1.0], 2.0).unwrap(), 0.125, epsilon = 1e-15);
        assert_eq!(d.p_min, 0.125);
    }

    #[test]
    fn density_rejects_points_off_support() {
        let d = HiddenParamDistribution::uniform(2, 1.0).unwrap();
        assert!(d.density_value(&[1.0, 1.0], 0.0).is_err());
        assert!(d.density_value(&[1.0, 0.0], 1.5).is_err());
        assert!(d.density_value(&[1.0], 0.0).is_err());
    }

    #[test]
    fn samples_lie_on_support() {
        for n in 1..=3 {
            let d = HiddenParamDistribution::uniform(n, 1.5).unwrap();
            for p in d.sample_hidden_params(2000, 9) {
                assert!((norm(&p.alpha) - 1.0).abs() <= 1e-12);
                assert!(p.t.abs() <= 1.5);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_prefix_stable() {
        let d = HiddenParamDistribution::uniform(2, 1.0).unwrap();
        let a = d.sample_hidden_params_with(500, 42, Execution::Sequential);
        let b = d.sample_hidden_params_with(500, 42, Execution::Parallel);
        assert_eq!(a, b);
        let c = d.sample_hidden_params(100, 42);
        assert_eq!(&a[..100], &c[..]);
        assert_ne!(a, d.sample_hidden_params(500, 43));
    }

    #[test]
    fn one_dimensional_signs_are_balanced() {
        // binomial oracle: sd = 0.5/√N ≈ 0.0016, so ±0.01 is > 6 sd
        let d = HiddenParamDistribution::uniform(1, 1.0).unwrap();
        let s = d.sample_hidden_params(100_000, 1);
        let plus = s.iter().filter(|p| p.alpha[0] > 0.0).count() as f64 / s.len() as f64;
        assert!((plus - 0.5).abs() < 0.01, "{plus}");
    }

    #[test]
    fn biases_pass_kolmogorov_smirnov() {
        let d = HiddenParamDistribution::uniform(1, 1.0).unwrap();
        let mut t: Vec<f64> = d.sample_hidden_params(100_000, 5).into_iter().map(|p| p.t).collect();
        t.sort_by(f64::total_cmp);
        let n = t.len() as f64;
        let ks = t
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let cdf = (x + 1.0) / 2.0;
                (cdf - i as f64 / n).abs().max(((i + 1) as f64 / n - cdf).abs())
            })
            .fold(0.0, f64::max);
        // 1% critical value ≈ 1.628/√N
        assert!(ks < 1.628 / n.sqrt(), "KS = {ks}");
    }

    #[test]
    fn circle_directions_pass_chi_square() {
        let d = HiddenParamDistribution::uniform(2, 1.0).unwrap();
        let s = d.sample_hidden_params(100_000, 11);
        let mut bins = [0usize; 36];
        for p in &s {
            let a = p.alpha[1].atan2(p.alpha[0]).rem_euclid(2.0 * PI);
            bins[((a / (2.0 * PI) * 36.0) as usize).min(35)] += 1;
        }
        let e = s.len() as f64 / 36.0;
        let chi2: f64 = bins.iter().map(|&o| (o as f64 - e).powi(2) / e).sum();
        // χ²₃₅ at 1%: 57.34
        assert!(chi2 < 57.34, "chi2 = {chi2}");
    }
}
