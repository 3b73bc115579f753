//! Model-reference adaptive control driven by random ReLU features.
//!
//! Plant `ẋ = Ax + B(u + f(x))`, reference model `ẋᵣ = A_r xᵣ + B_r r`, and
//! the blended adaptive law
//! `u = K̂_x x − Θ̂Ψ(x) + (1 − μ(x)) K̂_r r + μ(x) ũ(x)`.
//! Gains are stored in the `ℓ×n` / `ℓ×ℓ` orientation, so the control enters
//! as `K̂_x x` directly.

pub mod lyapunov;
pub mod ode;
pub mod scenario;
pub mod sim;

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};

/// Serde adapter storing a matrix as a list of rows.
pub(crate) mod matrix_rows {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != c) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
    }
}
use crate::relu;
use crate::sampling::{HiddenParam, ParamDensity};
use crate::targets::{sphere_area, SmoothTarget};

pub use lyapunov::{is_hurwitz, norm2, solve_lyapunov};
pub use sim::{
    check_theorem2_conditions, simulate, AdaptiveControllerState, ConditionCheck, ConditionReport, Gain,
    ReferenceInput, Trajectory,
};

/// Tolerance on the matching conditions and the Lyapunov residual.
pub const MATCHING_TOL: f64 = 1e-10;

/// The unknown nonlinearity `f : Rⁿ → R^ℓ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Nonlinearity {
    Zero { outputs: usize },
    /// One smooth target per output.
    Smooth(Vec<SmoothTarget>),
}

impl Nonlinearity {
    pub fn outputs(&self) -> usize {
        match self {
            Nonlinearity::Zero { outputs } => *outputs,
            Nonlinearity::Smooth(v) => v.len(),
        }
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Nonlinearity::Zero { .. } => out.fill(0.0),
            Nonlinearity::Smooth(v) => {
                for (o, f) in out.iter_mut().zip(v) {
                    *o = f.value(x);
                }
            }
        }
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.outputs()];
        self.eval_into(x, &mut out);
        out
    }

    /// Largest smoothness constant over the outputs (0 for `Zero`).
    pub fn rho(&self) -> f64 {
        match self {
            Nonlinearity::Zero { .. } => 0.0,
            Nonlinearity::Smooth(v) => v.iter().map(|f| f.rho).fold(0.0, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MracSystem {
    #[serde(with = "matrix_rows")]
    pub a: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub b: DMatrix<f64>,
    pub f: Nonlinearity,
    #[serde(with = "matrix_rows")]
    pub a_r: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub b_r: DMatrix<f64>,
    /// `ℓ×n` with `A + B K_x = A_r`.
    #[serde(with = "matrix_rows")]
    pub k_x: DMatrix<f64>,
    /// `ℓ×ℓ` with `B K_r = B_r`.
    #[serde(with = "matrix_rows")]
    pub k_r: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub p: DMatrix<f64>,
    #[serde(with = "matrix_rows")]
    pub q: DMatrix<f64>,
}

impl MracSystem {
    /// Derives the matching gains through the pseudo-inverse of `B` and
    /// solves for `P`; fails unless the matching conditions hold exactly.
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        a_r: DMatrix<f64>,
        b_r: DMatrix<f64>,
        q: DMatrix<f64>,
        f: Nonlinearity,
    ) -> Result<Self> {
        let n = a.nrows();
        let ell = b.ncols();
        if !a.is_square() || n == 0 {
            return Err(Error::invalid("A must be a non-empty square matrix"));
        }
        if b.nrows() != n || ell == 0 {
            return Err(Error::invalid(format!("B is {:?}, expected ({n}, ℓ ≥ 1)", b.shape())));
        }
        if a_r.shape() != (n, n) || b_r.shape() != (n, ell) {
            return Err(Error::invalid("A_r must be n×n and B_r n×ℓ"));
        }
        if f.outputs() != ell {
            return Err(Error::invalid(format!(
                "nonlinearity has {} outputs, B has {ell} columns",
                f.outputs()
            )));
        }
        if let Nonlinearity::Smooth(v) = &f {
            if v.iter().any(|t| t.n != n) {
                return Err(Error::invalid("nonlinearity components must act on Rⁿ"));
            }
        }
        let b_pinv = b
            .clone()
            .pseudo_inverse(1e-14)
            .map_err(|e| Error::numerical(format!("pseudo-inverse of B: {e}")))?;
        let k_x = &b_pinv * (&a_r - &a);
        let k_r = &b_pinv * &b_r;
        let p = solve_lyapunov(&a_r, &q)?;
        let sys = Self {
            a,
            b,
            f,
            a_r,
            b_r,
            k_x,
            k_r,
            p,
            q,
        };
        let (mx, mr) = sys.matching_residuals();
        if mx > MATCHING_TOL || mr > MATCHING_TOL {
            return Err(Error::invalid(format!(
                "matching conditions fail: ‖A + BK_x − A_r‖ = {mx:e}, ‖BK_r − B_r‖ = {mr:e}"
            )));
        }
        let lyap = lyapunov::lyapunov_residual(&sys.a_r, &sys.p, &sys.q);
        if lyap > MATCHING_TOL * norm2(&sys.q) {
            return Err(Error::numerical(format!("Lyapunov residual {lyap:e} too large")));
        }
        Ok(sys)
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn ell(&self) -> usize {
        self.b.ncols()
    }

    /// `(‖A + BK_x − A_r‖, ‖BK_r − B_r‖)` in the max-entry norm.
    pub fn matching_residuals(&self) -> (f64, f64) {
        (
            (&self.a + &self.b * &self.k_x - &self.a_r).amax(),
            (&self.b * &self.k_r - &self.b_r).amax(),
        )
    }

    /// Shortest time constant of the reference model, `1 / max|Re λ(A_r)|`.
    pub fn fastest_time_constant(&self) -> f64 {
        let fastest = self
            .a_r
            .complex_eigenvalues()
            .iter()
            .map(|z| z.re.abs())
            .fold(0.0, f64::max);
        1.0 / fastest
    }
}

/// `Ψ(x) = [1, xᵀ, σ(α₁ᵀx − t₁), …, σ(α_mᵀx − t_m)]ᵀ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub n: usize,
    pub params: Vec<HiddenParam>,
}

impl FeatureMap {
    pub fn m(&self) -> usize {
        self.params.len()
    }

    /// `m + n + 1`.
    pub fn dim(&self) -> usize {
        self.params.len() + self.n + 1
    }

    pub fn eval_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        out[0] = 1.0;
        out[1..=self.n].copy_from_slice(x);
        for (o, p) in out[self.n + 1..].iter_mut().zip(&self.params) {
            *o = relu(dot(&p.alpha, x) - p.t);
        }
    }

    pub fn eval(&self, x: &[f64]) -> DVector<f64> {
        let mut out = DVector::zeros(self.dim());
        self.eval_into(x, out.as_mut_slice());
        out
    }
}

pub fn build_feature_map<D: ParamDensity>(n: usize, m: usize, dist: &D, seed: u64) -> Result<FeatureMap> {
    if m == 0 {
        return Err(Error::invalid("feature map needs m ≥ 1"));
    }
    if dist.dim() != n {
        return Err(Error::invalid(format!(
            "distribution dimension {} does not match n = {n}",
            dist.dim()
        )));
    }
    Ok(FeatureMap {
        n,
        params: dist.sample_hidden_params(m, seed),
    })
}

fn check_nu(nu: f64) -> Result<()> {
    if !(nu > 0.0 && nu < 1.0) {
        return Err(Error::invalid(format!("nu must lie in (0, 1), got {nu}")));
    }
    Ok(())
}

/// Smallest `m ≥ ℓ/ε₀² · (κ₀ + κ₁ √log(4ℓ/ν))²`.
pub fn required_neurons(ell: usize, eps0: f64, nu: f64, kappa0: f64, kappa1: f64) -> Result<u64> {
    if ell == 0 {
        return Err(Error::invalid("ℓ must be positive"));
    }
    if !(eps0.is_finite() && eps0 > 0.0) {
        return Err(Error::invalid(format!("eps0 must be positive, got {eps0}")));
    }
    check_nu(nu)?;
    if !(kappa0 >= 0.0 && kappa1 >= 0.0) {
        return Err(Error::invalid("kappa0 and kappa1 must be nonnegative"));
    }
    let l = ell as f64;
    let root = kappa0 + kappa1 * (4.0 * l / nu).ln().sqrt();
    let m = l / (eps0 * eps0) * root * root;
    if m > u64::MAX as f64 {
        return Err(Error::numerical(format!("required m = {m:e} overflows")));
    }
    Ok(m.ceil() as u64)
}

/// `2√ℓ ρA_{n-1} + √ℓ ρ (1 + ‖x‖√(m+1)) ((1 + 4π + 2πR) A_{n-1} + 8π²ρ/(√m P_min))`.
pub fn epsilon_max(x: &[f64], rho: f64, n: usize, ell: usize, m: usize, radius: f64, p_min: f64) -> Result<f64> {
    if x.len() != n {
        return Err(Error::invalid(format!("point has length {}, expected {n}", x.len())));
    }
    if ell == 0 || m == 0 {
        return Err(Error::invalid("ℓ and m must be positive"));
    }
    for (name, v) in [("rho", rho), ("R", radius), ("p_min", p_min)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    let area = sphere_area(n)?;
    let sl = (ell as f64).sqrt();
    let sm = (m as f64).sqrt();
    let growth = 1.0 + norm(x) * (m as f64 + 1.0).sqrt();
    Ok(2.0 * sl * rho * area
        + sl * rho * growth * ((1.0 + 4.0 * PI + 2.0 * PI * radius) * area + 8.0 * PI * PI * rho / (sm * p_min)))
}

/// `4‖P‖‖Q⁻¹‖ε₀` in the induced 2-norm.
pub fn tracking_ultimate_bound(p: &DMatrix<f64>, q: &DMatrix<f64>, eps0: f64) -> Result<f64> {
    if !(eps0.is_finite() && eps0 >= 0.0) {
        return Err(Error::invalid(format!("eps0 must be nonnegative, got {eps0}")));
    }
    if !lyapunov::is_positive_definite(p) || !lyapunov::is_positive_definite(q) {
        return Err(Error::invalid("P and Q must be symmetric positive definite"));
    }
    let sq = q.singular_values();
    let smin = sq.min();
    if smin <= sq.max() * f64::EPSILON * q.nrows() as f64 {
        return Err(Error::invalid("Q is singular"));
    }
    Ok(4.0 * norm2(p) / smin * eps0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::HiddenParamDistribution;
    use crate::targets::gaussian_target;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn m1(v: f64) -> DMatrix<f64> {
        DMatrix::from_element(1, 1, v)
    }

    pub(crate) fn scalar_testbed(f: Nonlinearity) -> MracSystem {
        MracSystem::new(m1(1.0), m1(1.0), m1(-1.0), m1(1.0), m1(1.0), f).unwrap()
    }

    #[test]
    fn scalar_testbed_gains() {
        let s = scalar_testbed(Nonlinearity::Zero { outputs: 1 });
        assert_relative_eq!(s.k_x[(0, 0)], -2.0, epsilon = 1e-15);
        assert_relative_eq!(s.k_r[(0, 0)], 1.0, epsilon = 1e-15);
        assert_relative_eq!(s.p[(0, 0)], 0.5, epsilon = 1e-15);
        let (mx, mr) = s.matching_residuals();
        assert!(mx < MATCHING_TOL && mr < MATCHING_TOL);
    }

    #[test]
    fn planar_matching_and_mismatch() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 2.0, -1.0]);
        let b = DMatrix::from_row_slice(2, 1, &[0.0, 1.0]);
        let a_r = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -2.0, -3.0]);
        let b_r = DMatrix::from_row_slice(2, 1, &[0.0, 2.0]);
        let s = MracSystem::new(
            a.clone(),
            b.clone(),
            a_r.clone(),
            b_r,
            DMatrix::identity(2, 2),
            Nonlinearity::Zero { outputs: 1 },
        )
        .unwrap();
        let (mx, mr) = s.matching_residuals();
        assert!(mx < MATCHING_TOL && mr < MATCHING_TOL);
        assert_relative_eq!(s.fastest_time_constant(), 0.5, epsilon = 1e-12);
        // B_r outside the range of B cannot be matched
        let bad = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let e = MracSystem::new(a, b, a_r, bad, DMatrix::identity(2, 2), Nonlinearity::Zero { outputs: 1 });
        assert!(e.unwrap_err().is_validation());
    }

    #[test]
    fn feature_map_layout() {
        let d = HiddenParamDistribution::uniform(2, 1.0).unwrap();
        let fm = build_feature_map(2, 7, &d, 3).unwrap();
        assert_eq!(fm.dim(), 10);
        let psi0 = fm.eval(&[0.0, 0.0]);
        assert_eq!(psi0[0], 1.0);
        assert_eq!((psi0[1], psi0[2]), (0.0, 0.0));
        for (i, p) in fm.params.iter().enumerate() {
            assert_eq!(psi0[3 + i], relu(-p.t));
        }
        assert!(build_feature_map(2, 0, &d, 3).is_err());
    }

    #[test]
    fn feature_norm_bound() {
        let d = HiddenParamDistribution::uniform(2, 1.5).unwrap();
        let fm = build_feature_map(2, 50, &d, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..500 {
            let r = 1.5 * rng.random::<f64>().sqrt();
            let a = rng.random::<f64>() * 2.0 * PI;
            let x = [r * a.cos(), r * a.sin()];
            // direct sum of squares of the layout
            let direct: f64 = 1.0
                + x.iter().map(|v| v * v).sum::<f64>()
                + fm.params.iter().map(|p| relu(dot(&p.alpha, &x) - p.t).powi(2)).sum::<f64>();
            let psi = fm.eval(&x);
            assert_relative_eq!(psi.norm(), direct.sqrt(), max_relative = 1e-12);
            let rx = norm(&x);
            assert!(psi.norm_squared() <= 1.0 + rx * rx + 50.0 * (rx + 1.5).powi(2) + 1e-12);
        }
    }

    #[test]
    fn required_neuron_counts() {
        assert_eq!(required_neurons(1, 0.5, 0.1, 10.0, 5.0).unwrap(), 1538);
        // independent evaluation
        let want = (4.0 * (10.0 + 5.0 * 40f64.ln().sqrt()).powi(2)).ceil() as u64;
        assert_eq!(required_neurons(1, 0.5, 0.1, 10.0, 5.0).unwrap(), want);
        let a = required_neurons(1, 0.2, 0.1, 10.0, 5.0).unwrap();
        let b = required_neurons(1, 0.1, 0.1, 10.0, 5.0).unwrap();
        assert!((b as i64 - 4 * a as i64).abs() <= 4);
        assert!(required_neurons(1, 0.5, 1.0, 10.0, 5.0).is_err());
        assert!(required_neurons(1, 0.0, 0.1, 10.0, 5.0).is_err());
    }

    #[test]
    fn realistic_neuron_count_is_astronomical() {
        let pi = PI;
        let k0 = 512.0 * pi.powf(2.5) * (4.0 * pi + 2.0);
        let k1 = 1056.0 * pi * pi + 2.0 * (4.0 + 256.0 * pi);
        let m = required_neurons(1, 0.1, 0.1, k0, k1).unwrap() as f64;
        assert!(m > 2.0e12 && m < 2.8e12, "{m:e}");
    }

    #[test]
    fn epsilon_max_values() {
        let pi = PI;
        let e = epsilon_max(&[0.0], 1.0, 1, 1, 100, 1.0, 0.25).unwrap();
        assert_relative_eq!(e, 4.0 + 2.0 + 12.0 * pi + 3.2 * pi * pi, max_relative = 1e-12);
        assert!((e - 75.28).abs() < 5e-3, "{e}");
        let e1 = epsilon_max(&[0.5], 1.0, 1, 1, 100, 1.0, 0.25).unwrap();
        let e2 = epsilon_max(&[-1.0], 1.0, 1, 1, 100, 1.0, 0.25).unwrap();
        assert_relative_eq!(e2 - e, 2.0 * (e1 - e), max_relative = 1e-12);
        let e4 = epsilon_max(&[0.0], 1.0, 1, 4, 100, 1.0, 0.25).unwrap();
        assert_relative_eq!(e4, 2.0 * e, max_relative = 1e-12);
    }

    #[test]
    fn ultimate_bound_values() {
        assert_relative_eq!(tracking_ultimate_bound(&m1(1.0), &m1(2.0), 0.1).unwrap(), 0.2, epsilon = 1e-15);
        let p = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0]));
        assert_relative_eq!(
            tracking_ultimate_bound(&p, &DMatrix::identity(2, 2), 1.0).unwrap(),
            8.0,
            epsilon = 1e-12
        );
        assert_eq!(tracking_ultimate_bound(&m1(1.0), &m1(2.0), 0.0).unwrap(), 0.0);
        assert!(tracking_ultimate_bound(&m1(1.0), &m1(0.0), 0.1).is_err());
    }

    #[test]
    fn nonlinearity_evaluation() {
        let f = Nonlinearity::Smooth(vec![gaussian_target(1, 4).unwrap()]);
        assert_relative_eq!(f.eval(&[0.0])[0], 1.0, epsilon = 1e-15);
        assert_eq!(Nonlinearity::Zero { outputs: 2 }.eval(&[1.0]), vec![0.0, 0.0]);
        assert!(f.rho() > 0.0);
    }
}
