//! Smooth target functions with closed-form Fourier spectra.
//!
//! Targets are finite sums of modulated, dilated Gaussians
//! `w · exp(−π‖x − c‖² / s²)`, whose transform (with the `e^{−j2πωᵀx}` kernel)
//! is `w sⁿ exp(−π s² ‖ω‖²) e^{−j2πωᵀc}`. The magnitude is dominated by the
//! radial envelope `Σ |w| sⁿ exp(−π s² r²)`, which gives an analytic handle on
//! both the smoothness constant and every spectral tail.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma, gamma_ur};

use crate::error::{Error, Result};
use crate::linalg::dot;

/// Number of grid points used by [`smoothness_constant`].
pub const RHO_GRID_POINTS: usize = 10_001;

/// Surface area `A_{n-1} = 2π^{n/2} / Γ(n/2)` of the unit sphere in `Rⁿ`.
pub fn sphere_area(n: usize) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("sphere_area: dimension must be at least 1"));
    }
    let h = n as f64 / 2.0;
    Ok(2.0 * PI.powf(h) / gamma(h))
}

/// Dimension together with its sphere area.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MathConstants {
    pub n: usize,
    pub area: f64,
}

impl MathConstants {
    pub fn new(n: usize) -> Result<Self> {
        Ok(Self {
            n,
            area: sphere_area(n)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianComponent {
    pub weight: f64,
    /// Dilation `s > 0`; larger means wider in space, narrower in frequency.
    pub width: f64,
    pub center: Vec<f64>,
}

impl GaussianComponent {
    fn value(&self, x: &[f64]) -> f64 {
        let d2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(a, c)| (a - c) * (a - c))
            .sum();
        self.weight * (-PI * d2 / (self.width * self.width)).exp()
    }

    /// Magnitude of this component's spectrum at radius `r`.
    fn envelope(&self, n: usize, r: f64) -> f64 {
        self.weight.abs()
            * self.width.powi(n as i32)
            * (-PI * self.width * self.width * r * r).exp()
    }
}

/// A real-valued target `f : Rⁿ → R` satisfying
/// `sup_ω |f̂(ω)| (1 + ‖ω‖^k) ≤ ρ` with `k ≥ n + 3`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothTarget {
    pub n: usize,
    pub k: u32,
    pub rho: f64,
    pub components: Vec<GaussianComponent>,
}

/// `exp(−π‖x‖²)`, its own Fourier transform, with ρ certified for order `k`.
pub fn gaussian_target(n: usize, k: u32) -> Result<SmoothTarget> {
    SmoothTarget::mixture(
        n,
        k,
        vec![GaussianComponent {
            weight: 1.0,
            width: 1.0,
            center: vec![0.0; n],
        }],
    )
}

impl SmoothTarget {
    /// Validates the components and certifies ρ.
    pub fn mixture(n: usize, k: u32, components: Vec<GaussianComponent>) -> Result<Self> {
        if n == 0 {
            return Err(Error::invalid("target dimension must be at least 1"));
        }
        check_order(n, k)?;
        if components.is_empty() {
            return Err(Error::invalid("target needs at least one component"));
        }
        for c in &components {
            if c.center.len() != n {
                return Err(Error::invalid(format!(
                    "component center has length {}, expected {n}",
                    c.center.len()
                )));
            }
            if !c.weight.is_finite() || c.center.iter().any(|v| !v.is_finite()) {
                return Err(Error::invalid("component parameters must be finite"));
            }
        }
        let mut target = Self {
            n,
            k,
            rho: f64::NAN,
            components,
        };
        target.rho = smoothness_constant(&target, k)?;
        Ok(target)
    }

    /// `c · f`, with ρ recertified.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let comps = self
            .components
            .iter()
            .map(|g| GaussianComponent {
                weight: g.weight * c,
                ..g.clone()
            })
            .collect();
        Self::mixture(self.n, self.k, comps)
    }

    /// `x ↦ f(x / s)`, with ρ recertified.
    pub fn dilated(&self, s: f64) -> Result<Self> {
        let comps = self
            .components
            .iter()
            .map(|g| GaussianComponent {
                weight: g.weight,
                width: g.width * s,
                center: g.center.iter().map(|c| c * s).collect(),
            })
            .collect();
        Self::mixture(self.n, self.k, comps)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.n);
        self.components.iter().map(|c| c.value(x)).sum()
    }

    /// `(Re f̂(ω), Im f̂(ω))`.
    pub fn spectrum(&self, omega: &[f64]) -> (f64, f64) {
        let r2 = dot(omega, omega);
        let mut re = 0.0;
        let mut im = 0.0;
        for c in &self.components {
            let mag =
                c.weight * c.width.powi(self.n as i32) * (-PI * c.width * c.width * r2).exp();
            let arg = 2.0 * PI * dot(omega, &c.center);
            re += mag * arg.cos();
            im -= mag * arg.sin();
        }
        (re, im)
    }

    /// `|f̂(ω)|`.
    pub fn spectrum_magnitude(&self, omega: &[f64]) -> f64 {
        let (re, im) = self.spectrum(omega);
        re.hypot(im)
    }

    /// Phase `θ(ω)` in cycles, in `[−1/2, 1/2)`, so that `f̂ = e^{j2πθ}|f̂|`.
    pub fn spectrum_phase(&self, omega: &[f64]) -> f64 {
        let (re, im) = self.spectrum(omega);
        polar_phase(re, im)
    }

    /// Magnitude and phase from a single spectrum evaluation.
    pub fn spectrum_polar(&self, omega: &[f64]) -> (f64, f64) {
        let (re, im) = self.spectrum(omega);
        (re.hypot(im), polar_phase(re, im))
    }

    /// Radially decreasing majorant of `|f̂|` on the sphere of radius `r`.
    pub fn radial_envelope(&self, r: f64) -> f64 {
        self.components.iter().map(|c| c.envelope(self.n, r)).sum()
    }

    /// Upper bound on `∫_{‖ω‖ ≥ r} |f̂(ω)| ‖ω‖^power dω`, using the tighter of
    /// the Gaussian envelope tail and the polynomial tail implied by ρ.
    pub fn spectral_tail(&self, r: f64, power: u32) -> f64 {
        let area = sphere_area(self.n).expect("n validated at construction");
        // radial exponent including the Jacobian r^{n-1}
        let p = (self.n as u32 + power - 1) as f64;
        let h = (p + 1.0) / 2.0;
        // ∫_r^∞ s^p e^{−a s²} ds = ½ a^{−h} Γ(h, a r²)
        let envelope_tail: f64 = self
            .components
            .iter()
            .map(|c| {
                let a = PI * c.width * c.width;
                let upper = gamma_ur(h, a * r * r) * gamma(h);
                c.weight.abs() * c.width.powi(self.n as i32) * 0.5 * a.powf(-h) * upper
            })
            .sum();
        // ρ ∫_r^∞ s^p / (1 + s^k) ds ≤ ρ r^{p+1−k} / (k − p − 1)
        let excess = self.k as f64 - p - 1.0;
        let rho_tail = if excess > 0.0 && r > 0.0 {
            self.rho * r.powf(-excess) / excess
        } else {
            f64::INFINITY
        };
        area * envelope_tail.min(rho_tail)
    }

    /// Lipschitz constant `4π A_{n-1} ρ` implied by the smoothness condition.
    pub fn lipschitz_bound(&self) -> f64 {
        4.0 * PI * sphere_area(self.n).expect("n validated") * self.rho
    }

    /// `‖f̂‖₁ ≤ 2ρA_{n-1}`, which also bounds `‖f‖_∞`.
    pub fn l1_spectrum_bound(&self) -> f64 {
        2.0 * self.rho * sphere_area(self.n).expect("n validated")
    }
}

fn polar_phase(re: f64, im: f64) -> f64 {
    if re == 0.0 && im == 0.0 {
        return 0.0;
    }
    let theta = im.atan2(re) / (2.0 * PI);
    if theta >= 0.5 {
        theta - 1.0
    } else {
        theta
    }
}

fn check_order(n: usize, k: u32) -> Result<()> {
    if (k as usize) < n + 3 {
        return Err(Error::invalid(format!(
            "smoothness order k = {k} must be at least n + 3 = {}",
            n + 3
        )));
    }
    Ok(())
}

/// Certified upper bound on `sup_ω |f̂(ω)| (1 + ‖ω‖^k)`.
///
/// `|f̂|` is bounded by the radially decreasing envelope `E(r)`, so on each
/// grid cell `[rᵢ, rᵢ₊₁]` the product is at most `E(rᵢ)(1 + rᵢ₊₁^k)`. The grid
/// ends past every component's turning point `r² = k / (2π s²)`, beyond which
/// each `e^{−πs²r²}(1 + r^k)` is decreasing, so the last cell also covers the
/// tail.
pub fn smoothness_constant(target: &SmoothTarget, k: u32) -> Result<f64> {
    check_order(target.n, k)?;
    let mut edge: f64 = 1.0;
    for c in &target.components {
        if !(c.width.is_finite() && c.width > 0.0) {
            return Err(Error::numerical(format!(
                "cannot certify spectral decay for component width {}",
                c.width
            )));
        }
        edge = edge.max((k as f64 / (2.0 * PI * c.width * c.width)).sqrt() * 1.01);
    }
    let kf = k as i32;
    let cells = RHO_GRID_POINTS - 1;
    let h = edge / cells as f64;
    let mut best: f64 = 0.0;
    for i in 0..cells {
        let r0 = i as f64 * h;
        let r1 = if i + 1 == cells { edge } else { (i + 1) as f64 * h };
        best = best.max(target.radial_envelope(r0) * (1.0 + r1.powi(kf)));
    }
    if !(best.is_finite() && best > 0.0) {
        return Err(Error::numerical(
            "smoothness constant is not a positive finite number",
        ));
    }
    Ok(best)
}

/// Declarative target description used by configuration files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// `weight · exp(−π‖x − center‖²/width²)`.
    Gaussian {
        #[serde(default)]
        k: Option<u32>,
        #[serde(default = "one")]
        weight: f64,
        #[serde(default = "one")]
        width: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    Mixture {
        #[serde(default)]
        k: Option<u32>,
        components: Vec<GaussianComponent>,
    },
}

fn one() -> f64 {
    1.0
}

impl TargetSpec {
    /// Builds the target in dimension `n`; `k` defaults to `n + 3`.
    pub fn build(&self, n: usize) -> Result<SmoothTarget> {
        let order = |k: &Option<u32>| k.unwrap_or(n as u32 + 3);
        match self {
            TargetSpec::Gaussian {
                k,
                weight,
                width,
                center,
            } => SmoothTarget::mixture(
                n,
                order(k),
                vec![GaussianComponent {
                    weight: *weight,
                    width: *width,
                    center: center.clone().unwrap_or_else(|| vec![0.0; n]),
                }],
            ),
            TargetSpec::Mixture { k, components } => SmoothTarget::mixture(n, order(k), components.clone()),
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::linalg::norm;
    use approx::assert_relative_eq;

    fn grid_max(k: i32) -> f64 {
        // brute force: exp(−πω²)(1+|ω|^k) on 2·10⁶+1 points in [−10, 10]
        let n = 2_000_000;
        (0..=n)
            .map(|i| {
                let w = -10.0 + 20.0 * i as f64 / n as f64;
                (-PI * w * w).exp() * (1.0 + w.abs().powi(k))
            })
            .fold(0.0, f64::max)
    }

    pub(crate) fn mixture_1d() -> SmoothTarget {
        SmoothTarget::mixture(
            1,
            4,
            vec![
                GaussianComponent {
                    weight: 1.0,
                    width: 0.8,
                    center: vec![0.3],
                },
                GaussianComponent {
                    weight: -0.5,
                    width: 0.5,
                    center: vec![-0.4],
                },
            ],
        )
        .unwrap()
    }

    pub(crate) fn mixture_2d() -> SmoothTarget {
        SmoothTarget::mixture(
            2,
            5,
            vec![
                GaussianComponent {
                    weight: 0.7,
                    width: 1.0,
                    center: vec![0.2, -0.1],
                },
                GaussianComponent {
                    weight: 0.4,
                    width: 0.6,
                    center: vec![-0.3, 0.25],
                },
            ],
        )
        .unwrap()
    }

    #[test]
    fn sphere_area_values() {
        assert_relative_eq!(sphere_area(1).unwrap(), 2.0, epsilon = 1e-14);
        assert_relative_eq!(sphere_area(2).unwrap(), 2.0 * PI, epsilon = 1e-14);
        assert_relative_eq!(sphere_area(3).unwrap(), 4.0 * PI, epsilon = 1e-13);
        assert!(sphere_area(0).is_err());
    }

    #[test]
    fn sphere_area_recursion() {
        for n in 1..30 {
            let lhs = sphere_area(n + 2).unwrap();
            let rhs = sphere_area(n).unwrap() * 2.0 * PI / n as f64;
            assert_relative_eq!(lhs, rhs, max_relative = 1e-12);
        }
    }

    #[test]
    fn gaussian_basics() {
        let g = gaussian_target(1, 4).unwrap();
        assert_eq!(g.value(&[0.0]), 1.0);
        assert_eq!(g.spectrum_magnitude(&[0.0]), 1.0);
        assert_eq!(g.spectrum_phase(&[0.3]), 0.0);
        assert_relative_eq!(g.rho, 1.0, epsilon = 1e-9);
        assert!(g.rho >= 1.0);
    }

    #[test]
    fn rho_matches_brute_force_grid() {
        let g = gaussian_target(1, 4).unwrap();
        let oracle4 = grid_max(4);
        assert_relative_eq!(oracle4, 1.0, epsilon = 1e-12);
        assert!(g.rho >= oracle4);

        let rho6 = smoothness_constant(&g, 6).unwrap();
        let oracle6 = grid_max(6);
        assert!(rho6 >= oracle6);
        assert_relative_eq!(rho6, oracle6, max_relative = 1e-3);
    }

    #[test]
    fn rho_is_linear_in_scale() {
        let g = gaussian_target(2, 5).unwrap();
        let g2 = g.scaled(2.0).unwrap();
        assert_relative_eq!(g2.rho, 2.0 * g.rho, max_relative = 1e-14);
    }

    #[test]
    fn rejects_low_order() {
        assert!(gaussian_target(1, 3).is_err());
        assert!(gaussian_target(2, 4).is_err());
        assert!(gaussian_target(2, 5).is_ok());
    }

    #[test]
    fn refuses_to_certify_without_decay() {
        let mut g = gaussian_target(1, 4).unwrap();
        g.components[0].width = 0.0;
        assert!(matches!(smoothness_constant(&g, 4), Err(Error::Numerical(_))));
    }

    #[test]
    fn smoothness_holds_on_dense_grid() {
        for t in [gaussian_target(1, 4).unwrap(), mixture_1d()] {
            let k = t.k as i32;
            for i in 0..=10_000 {
                let w = -10.0 + 20.0 * i as f64 / 10_000.0;
                assert!(t.spectrum_magnitude(&[w]) * (1.0 + w.abs().powi(k)) <= t.rho);
            }
        }
        for t in [gaussian_target(2, 5).unwrap(), mixture_2d()] {
            let k = t.k as i32;
            for i in 0..=100 {
                for j in 0..=100 {
                    let w = [-10.0 + 0.2 * i as f64, -10.0 + 0.2 * j as f64];
                    assert!(t.spectrum_magnitude(&w) * (1.0 + norm(&w).powi(k)) <= t.rho);
                }
            }
        }
    }

    #[test]
    fn real_valued_symmetry() {
        let t = mixture_2d();
        for i in 0..50 {
            let w = [0.13 * i as f64 - 3.0, 0.07 * i as f64 - 1.0];
            let mw = [-w[0], -w[1]];
            assert_relative_eq!(
                t.spectrum_magnitude(&w),
                t.spectrum_magnitude(&mw),
                epsilon = 1e-15
            );
            let (p, q) = (t.spectrum_phase(&w), t.spectrum_phase(&mw));
            // θ(−ω) = −θ(ω) modulo whole cycles
            let d = (p + q).rem_euclid(1.0);
            assert!(!(1e-12..=1.0 - 1e-12).contains(&d));
            assert!((-0.5..0.5).contains(&p));
        }
    }

    #[test]
    fn inverse_transform_reproduces_values() {
        let t = mixture_1d();
        for i in 0..21 {
            let x = -2.0 + 0.2 * i as f64;
            let v = crate::quad::composite(-12.0, 12.0, 96, 16, |w| {
                let (m, th) = t.spectrum_polar(&[w]);
                m * (2.0 * PI * (w * x + th)).cos()
            });
            assert_relative_eq!(v, t.value(&[x]), epsilon = 1e-10);
        }
    }

    #[test]
    fn sup_norm_below_spectral_l1_bound() {
        for t in [gaussian_target(1, 4).unwrap(), mixture_1d()] {
            let l1 =
                crate::quad::composite(-12.0, 12.0, 96, 16, |w| t.spectrum_magnitude(&[w]));
            let sup = (0..=2000)
                .map(|i| t.value(&[-5.0 + 0.005 * i as f64]).abs())
                .fold(0.0, f64::max);
            assert!(sup <= l1 + 1e-12);
            assert!(l1 <= t.l1_spectrum_bound());
        }
    }

    #[test]
    fn spectral_tail_dominates_quadrature() {
        let t = mixture_1d();
        for r in [0.5, 1.0, 2.0, 3.0] {
            for power in 0..=2u32 {
                let v = 2.0
                    * crate::quad::composite(r, r + 20.0, 200, 16, |w| {
                        t.spectrum_magnitude(&[w]) * w.powi(power as i32)
                    });
                assert!(
                    t.spectral_tail(r, power) >= v * (1.0 - 1e-12),
                    "r={r} p={power}"
                );
            }
        }
    }

    #[test]
    fn target_spec_parses_and_builds() {
        let spec: TargetSpec = serde_json::from_str(r#"{"kind": "gaussian"}"#).unwrap();
        let t = spec.build(2).unwrap();
        assert_eq!((t.n, t.k), (2, 5));
        assert_eq!(t.value(&[0.0, 0.0]), 1.0);
        let spec: TargetSpec = serde_json::from_str(
            r#"{"kind": "mixture", "k": 6, "components": [{"weight": 0.5, "width": 0.8, "center": [0.1]}]}"#,
        )
        .unwrap();
        let t = spec.build(1).unwrap();
        assert_eq!(t.k, 6);
        assert!(serde_json::from_str::<TargetSpec>(r#"{"kind": "gaussian", "sigma": 1}"#).is_err());
        assert!(serde_json::from_str::<TargetSpec>(r#"{"kind": "gaussian", "k": 3}"#)
            .unwrap()
            .build(1)
            .is_err());
    }
}
