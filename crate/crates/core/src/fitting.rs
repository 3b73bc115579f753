//! Least-squares refit of the output layer `(a, b, c)` with the hidden
//! parameters frozen.
//!
//! The solve goes through a thin SVD of the design matrix rather than the
//! normal equations: ReLU columns with nearby biases are close to collinear
//! and squaring the condition number loses most of the useful digits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, norm};
use crate::network::ReluNetwork;
use crate::relu;
use crate::sampling::HiddenParam;

/// Uniform sample count for one-dimensional fits.
pub const DEFAULT_SAMPLES_1D: usize = 401;
/// Halton sample count inside the ball for `n ≥ 2`.
pub const DEFAULT_SAMPLES_ND: usize = 4096;
/// Default ridge relative to the largest squared column norm.
pub const DEFAULT_RIDGE_SCALE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct FitProblem {
    pub n: usize,
    pub radius: f64,
    pub hidden: Vec<HiddenParam>,
    pub sample_points: Vec<Vec<f64>>,
    pub sample_values: Vec<f64>,
    pub ridge: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub samples: usize,
    pub coefficients: usize,
    pub ridge: f64,
    pub residual_norm: f64,
    pub rms_residual: f64,
    pub max_abs_residual: f64,
    /// Largest over smallest singular value of the design matrix.
    pub condition_estimate: f64,
    pub numerical_rank: usize,
    /// Set when the unregularized system was rank deficient and the
    /// minimum-norm solution was returned.
    pub rank_deficient: bool,
}

#[derive(Debug, Clone)]
pub struct FitOutcome {
    pub network: ReluNetwork,
    pub report: FitReport,
}

impl FitProblem {
    /// Samples `f` on the default point set and uses the default ridge.
    pub fn from_function<F: Fn(&[f64]) -> f64>(
        n: usize,
        radius: f64,
        hidden: Vec<HiddenParam>,
        f: F,
    ) -> Result<Self> {
        let pts = default_sample_points(n, radius)?;
        let vals = pts.iter().map(|x| f(x)).collect();
        let mut p = Self {
            n,
            radius,
            hidden,
            sample_points: pts,
            sample_values: vals,
            ridge: 0.0,
        };
        p.validate_shapes()?;
        p.ridge = p.default_ridge();
        Ok(p)
    }

    pub fn coefficient_count(&self) -> usize {
        self.n + 1 + self.hidden.len()
    }

    /// `DEFAULT_RIDGE_SCALE` times the largest squared column norm.
    pub fn default_ridge(&self) -> f64 {
        let x = self.design_matrix();
        let max_col = x
            .column_iter()
            .map(|c| c.norm_squared())
            .fold(0.0, f64::max);
        DEFAULT_RIDGE_SCALE * max_col
    }

    fn validate_shapes(&self) -> Result<()> {
        if self.sample_points.len() != self.sample_values.len() {
            return Err(Error::invalid("one value per sample point is required"));
        }
        if let Some(x) = self.sample_points.iter().find(|x| x.len() != self.n) {
            return Err(Error::invalid(format!("sample point of length {} in dimension {}", x.len(), self.n)));
        }
        if let Some(p) = self.hidden.iter().find(|p| p.alpha.len() != self.n) {
            return Err(Error::invalid(format!("hidden weight of length {} in dimension {}", p.alpha.len(), self.n)));
        }
        if self
            .sample_points
            .iter()
            .any(|x| norm(x) > self.radius * (1.0 + 1e-12))
        {
            return Err(Error::invalid("sample points must lie in the ball B₀(R)"));
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.validate_shapes()?;
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            return Err(Error::invalid(format!("ridge must be nonnegative, got {}", self.ridge)));
        }
        if self.sample_points.len() < self.coefficient_count() && self.ridge == 0.0 {
            return Err(Error::invalid(format!(
                "{} samples for {} coefficients needs a positive ridge",
                self.sample_points.len(),
                self.coefficient_count()
            )));
        }
        if self.sample_values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("sample values must be finite"));
        }
        Ok(())
    }

    /// Rows `[1, x₁ … xₙ, σ(α₁ᵀx − t₁) … σ(α_mᵀx − t_m)]`.
    pub fn design_matrix(&self) -> DMatrix<f64> {
        let cols = self.coefficient_count();
        DMatrix::from_fn(self.sample_points.len(), cols, |i, j| {
            let x = &self.sample_points[i];
            match j {
                0 => 1.0,
                j if j <= self.n => x[j - 1],
                j => {
                    let p = &self.hidden[j - 1 - self.n];
                    relu(dot(&p.alpha, x) - p.t)
                }
            }
        })
    }
}

/// Minimizes `‖Xw − y‖² + ridge·‖w‖²` over the output-layer coefficients.
pub fn least_squares_fit(problem: &FitProblem) -> Result<FitOutcome> {
    problem.validate()?;
    let x = problem.design_matrix();
    let y = DVector::from_column_slice(&problem.sample_values);
    let svd = x.clone().svd(true, true);
    let u = svd.u.as_ref().expect("U requested");
    let vt = svd.v_t.as_ref().expect("Vᵀ requested");
    let s = &svd.singular_values;
    let smax = s.max();
    let cutoff = smax * (x.nrows().max(x.ncols()) as f64) * f64::EPSILON;
    let rank = s.iter().filter(|&&v| v > cutoff).count();
    let smin_kept = s.iter().copied().filter(|&v| v > cutoff).fold(f64::INFINITY, f64::min);

    let uty = u.transpose() * &y;
    let lambda = problem.ridge;
    let filtered = DVector::from_iterator(
        s.len(),
        s.iter().zip(uty.iter()).map(|(&si, &ui)| {
            if lambda > 0.0 {
                si * ui / (si * si + lambda)
            } else if si > cutoff {
                ui / si
            } else {
                0.0
            }
        }),
    );
    let w = vt.transpose() * filtered;

    let residual = &x * &w - &y;
    let rn = residual.norm();
    let samples = problem.sample_points.len();
    let n = problem.n;
    let a = w.rows(1, n).iter().copied().collect();
    let c: Vec<f64> = w.rows(n + 1, problem.hidden.len()).iter().copied().collect();
    let network = ReluNetwork::from_hidden(problem.radius, a, w[0], &problem.hidden, &c)?;
    let report = FitReport {
        samples,
        coefficients: problem.coefficient_count(),
        ridge: lambda,
        residual_norm: rn,
        rms_residual: rn / (samples as f64).sqrt(),
        max_abs_residual: residual.amax(),
        condition_estimate: smax / smin_kept,
        numerical_rank: rank,
        rank_deficient: lambda == 0.0 && rank < problem.coefficient_count(),
    };
    Ok(FitOutcome { network, report })
}

/// 401 uniform points on `[−R, R]` for `n = 1`; 4096 Halton points inside
/// `B₀(R)` otherwise.
pub fn default_sample_points(n: usize, radius: f64) -> Result<Vec<Vec<f64>>> {
    match n {
        0 => Err(Error::invalid("dimension must be positive")),
        1 => Ok((0..DEFAULT_SAMPLES_1D)
            .map(|i| vec![-radius + 2.0 * radius * i as f64 / (DEFAULT_SAMPLES_1D - 1) as f64])
            .collect()),
        _ => Ok(halton_ball(n, radius, DEFAULT_SAMPLES_ND)),
    }
}

const PRIMES: [u64; 10] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29];

fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    let b = base as f64;
    while i > 0 {
        f /= b;
        r += f * (i % base) as f64;
        i /= base;
    }
    r
}

/// First `count` Halton points of the cube `[−R, R]ⁿ` that fall in the ball.
pub fn halton_ball(n: usize, radius: f64, count: usize) -> Vec<Vec<f64>> {
    assert!(n <= PRIMES.len(), "Halton bases available up to n = {}", PRIMES.len());
    let mut out = Vec::with_capacity(count);
    let mut i = 1u64;
    while out.len() < count {
        let x: Vec<f64> = PRIMES[..n]
            .iter()
            .map(|&b| radius * (2.0 * radical_inverse(i, b) - 1.0))
            .collect();
        if norm(&x) <= radius {
            out.push(x);
        }
        i += 1;
    }
    out
}
