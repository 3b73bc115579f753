//! JSON-configured adaptive-control experiments.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lyapunov::is_hurwitz;
use super::sim::{
    check_theorem2_conditions, simulate, AdaptiveControllerState, ConditionReport, ConditionSettings, Gain,
    ReferenceInput, SimSettings, Trajectory,
};
use super::{build_feature_map, FeatureMap, MracSystem, Nonlinearity};
use crate::analysis::{default_grid_density, sup_error_with, SupError};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fitting::{least_squares_fit, FitProblem, FitReport};
use crate::sampling::{HiddenParamDistribution, ParamDensity};
use crate::targets::TargetSpec;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioGains {
    pub gamma_x: Gain,
    pub gamma_theta: Gain,
    pub gamma_r: Gain,
}

/// Starting value of `Θ̂`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialTheta {
    #[default]
    Zero,
    /// The least-squares weights `Θ*`.
    Fitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MracScenario {
    /// Row-major matrices.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub a_r: Vec<Vec<f64>>,
    pub b_r: Vec<Vec<f64>>,
    /// Defaults to the identity.
    #[serde(default)]
    pub q: Option<Vec<Vec<f64>>>,
    /// One target per input channel; empty means `f ≡ 0`.
    #[serde(default)]
    pub nonlinearity: Vec<TargetSpec>,
    #[serde(rename = "R")]
    pub radius: f64,
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
    pub gains: ScenarioGains,
    #[serde(default = "default_fallback_gain")]
    pub fallback_gain: f64,
    #[serde(default)]
    pub projection_bound: Option<f64>,
    #[serde(default)]
    pub initial_theta: InitialTheta,
    #[serde(default)]
    pub x0: Option<Vec<f64>>,
    #[serde(default)]
    pub x_r0: Option<Vec<f64>>,
    pub reference: ReferenceInput,
    pub horizon: f64,
    pub dt: f64,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    /// Allowed ratio of the steady error to the ultimate bound.
    #[serde(default = "default_bound_factor")]
    pub bound_factor: f64,
    /// Grid density for the certified fit error; defaults per dimension.
    #[serde(default)]
    pub fit_grid_density: Option<usize>,
    #[serde(default = "default_condition_grid")]
    pub condition_grid_density: usize,
    /// Condition (i) is checked on `B₀(wide_factor · R)`.
    #[serde(default = "default_wide_factor")]
    pub wide_factor: f64,
}

fn default_fallback_gain() -> f64 {
    2.0
}
fn default_record_every() -> usize {
    100
}
fn default_bound_factor() -> f64 {
    1.5
}
fn default_condition_grid() -> usize {
    201
}
fn default_wide_factor() -> f64 {
    1.25
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if r == 0 || c == 0 || rows.iter().any(|row| row.len() != c) {
        return Err(Error::invalid(format!("{name} must be a non-empty rectangular matrix")));
    }
    if rows.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid(format!("{name} has non-finite entries")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

impl MracScenario {
    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn system(&self) -> Result<MracSystem> {
        let a = matrix("A", &self.a)?;
        let b = matrix("B", &self.b)?;
        let n = a.nrows();
        let q = match &self.q {
            Some(q) => matrix("Q", q)?,
            None => DMatrix::identity(n, n),
        };
        let f = if self.nonlinearity.is_empty() {
            Nonlinearity::Zero { outputs: b.ncols() }
        } else {
            Nonlinearity::Smooth(self.nonlinearity.iter().map(|t| t.build(n)).collect::<Result<_>>()?)
        };
        MracSystem::new(a, b, matrix("A_r", &self.a_r)?, matrix("B_r", &self.b_r)?, q, f)
    }

    pub fn validate(&self) -> Result<MracSystem> {
        let sys = self.system()?;
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::invalid("R must be positive"));
        }
        if self.m == 0 {
            return Err(Error::invalid("m must be at least 1"));
        }
        if !(1.0..).contains(&self.bound_factor) {
            return Err(Error::invalid("bound_factor must be at least 1"));
        }
        check_fallback(&sys, self.fallback_gain)?;
        Ok(sys)
    }
}

impl MracScenario {
    /// `ẋ = x + u + exp(−πx²)` tracking `ẋᵣ = −xᵣ + r` under a ±0.5 square wave.
    pub fn scalar_testbed() -> Self {
        Self {
            a: vec![vec![1.0]],
            b: vec![vec![1.0]],
            a_r: vec![vec![-1.0]],
            b_r: vec![vec![1.0]],
            q: None,
            nonlinearity: vec![TargetSpec::Gaussian {
                k: None,
                weight: 1.0,
                width: 1.0,
                center: None,
            }],
            radius: 1.0,
            m: 200,
            seed: 0,
            gains: ScenarioGains {
                gamma_x: Gain::Scalar(10.0),
                gamma_theta: Gain::Scalar(100.0),
                gamma_r: Gain::Scalar(10.0),
            },
            fallback_gain: default_fallback_gain(),
            projection_bound: Some(100.0),
            initial_theta: InitialTheta::Zero,
            x0: None,
            x_r0: None,
            reference: ReferenceInput::SquareWave {
                amplitude: vec![0.5],
                period: 20.0,
            },
            horizon: 200.0,
            dt: 1e-3,
            record_every: default_record_every(),
            bound_factor: default_bound_factor(),
            fit_grid_density: None,
            condition_grid_density: default_condition_grid(),
            wide_factor: default_wide_factor(),
        }
    }

    /// Unstable second-order plant in companion form with a scalar input.
    pub fn planar_testbed() -> Self {
        Self {
            a: vec![vec![0.0, 1.0], vec![-1.0, 1.0]],
            b: vec![vec![0.0], vec![1.0]],
            a_r: vec![vec![0.0, 1.0], vec![-2.0, -3.0]],
            b_r: vec![vec![0.0], vec![2.0]],
            m: 400,
            reference: ReferenceInput::SquareWave {
                amplitude: vec![0.5],
                period: 20.0,
            },
            horizon: 100.0,
            dt: 5e-4,
            record_every: 200,
            ..Self::scalar_testbed()
        }
    }
}

/// `ũ = −k_f B⁺x` must stabilise the open-loop plant: `A − k_f B B⁺` Hurwitz.
pub fn check_fallback(sys: &MracSystem, k_f: f64) -> Result<()> {
    let b_pinv = sys
        .b
        .clone()
        .pseudo_inverse(1e-14)
        .map_err(|e| Error::numerical(format!("pseudo-inverse of B: {e}")))?;
    let closed = &sys.a - &sys.b * &b_pinv * k_f;
    if !(0.0..).contains(&k_f) || !is_hurwitz(&closed) {
        return Err(Error::invalid(format!(
            "fallback gain k_f = {k_f} does not make A − k_f B B⁺ Hurwitz"
        )));
    }
    Ok(())
}

/// Least-squares output weights for every input channel of `f`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureFit {
    /// `ℓ×(m+n+1)`; row `j` is `[b, aᵀ, c₁ … c_m]` for channel `j`.
    #[serde(with = "super::matrix_rows")]
    pub theta: DMatrix<f64>,
    pub reports: Vec<FitReport>,
    pub errors: Vec<SupError>,
    /// `sqrt(Σ_j ε_j²)` from the certified per-channel errors.
    pub eps0: f64,
}

pub fn fit_features(
    sys: &MracSystem,
    fmap: &FeatureMap,
    radius: f64,
    grid_density: usize,
    exec: Execution,
) -> Result<FeatureFit> {
    let ell = sys.ell();
    let mut theta = DMatrix::zeros(ell, fmap.dim());
    let targets = match &sys.f {
        Nonlinearity::Zero { .. } => {
            return Ok(FeatureFit {
                theta,
                reports: Vec::new(),
                errors: Vec::new(),
                eps0: 0.0,
            })
        }
        Nonlinearity::Smooth(v) => v,
    };
    let mut reports = Vec::with_capacity(ell);
    let mut errors = Vec::with_capacity(ell);
    for (j, target) in targets.iter().enumerate() {
        let problem = FitProblem::from_function(fmap.n, radius, fmap.params.clone(), |x| target.value(x))?;
        let fit = least_squares_fit(&problem)?;
        let err = sup_error_with(&fit.network, target, radius, grid_density, exec)?;
        theta[(j, 0)] = fit.network.b;
        for (i, a) in fit.network.a.iter().enumerate() {
            theta[(j, 1 + i)] = *a;
        }
        for (i, u) in fit.network.units.iter().enumerate() {
            theta[(j, fmap.n + 1 + i)] = u.c;
        }
        reports.push(fit.report);
        errors.push(err);
    }
    let eps0 = errors.iter().map(|e| e.certified_bound.powi(2)).sum::<f64>().sqrt();
    Ok(FeatureFit {
        theta,
        reports,
        errors,
        eps0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    /// `max ‖e‖` over the second half of the horizon.
    pub steady_error: f64,
    pub max_error: f64,
    pub final_error: f64,
    pub projection_steps: usize,
    pub final_theta_norm: f64,
}

impl RunSummary {
    fn of(tr: &Trajectory) -> Self {
        Self {
            steady_error: tr.steady_error(),
            max_error: tr.error_norm.iter().copied().fold(0.0, f64::max),
            final_error: *tr.error_norm.last().unwrap_or(&0.0),
            projection_steps: tr.projection_steps,
            final_theta_norm: *tr.theta_norm.last().unwrap_or(&0.0),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScenarioOutcome {
    pub n: usize,
    pub ell: usize,
    pub m: usize,
    pub seed: u64,
    #[serde(with = "super::matrix_rows")]
    pub p: DMatrix<f64>,
    #[serde(with = "super::matrix_rows")]
    pub q: DMatrix<f64>,
    #[serde(with = "super::matrix_rows")]
    pub k_x: DMatrix<f64>,
    #[serde(with = "super::matrix_rows")]
    pub k_r: DMatrix<f64>,
    pub fit: FeatureFit,
    pub conditions: ConditionReport,
    pub ultimate_bound: f64,
    pub bound_factor: f64,
    pub adaptive: RunSummary,
    /// Same run with adaptation switched off.
    pub frozen: RunSummary,
    /// `adaptive.steady_error ≤ bound_factor · ultimate_bound`.
    pub within_bound: bool,
    /// `frozen.steady_error / adaptive.steady_error`.
    pub improvement: f64,
    #[serde(skip)]
    pub trajectory: Option<Trajectory>,
}

/// Fits `Θ*`, checks the standing conditions, and runs the closed loop with
/// and without adaptation.
pub fn run_scenario(sc: &MracScenario, exec: Execution) -> Result<ScenarioOutcome> {
    let sys = sc.validate()?;
    let (n, ell) = (sys.n(), sys.ell());
    let dist = HiddenParamDistribution::uniform(n, sc.radius)?;
    let fmap = build_feature_map(n, sc.m, &dist, sc.seed)?;
    let grid = sc.fit_grid_density.unwrap_or_else(|| default_grid_density(n));
    let fit = fit_features(&sys, &fmap, sc.radius, grid, exec)?;

    let x0 = sc.x0.clone().unwrap_or_else(|| vec![0.0; n]);
    let x_r0 = sc.x_r0.clone().unwrap_or_else(|| vec![0.0; n]);
    let conditions = check_theorem2_conditions(
        &sys,
        &fmap,
        &fit.theta,
        &ConditionSettings {
            eps0: fit.eps0,
            radius: sc.radius,
            grid_density: sc.condition_grid_density,
            wide_factor: sc.wide_factor,
            p_min: dist.p_min(),
            reference: sc.reference.clone(),
            x_r0: x_r0.clone(),
            horizon: sc.horizon,
            dt: sc.dt,
        },
    )?;

    let theta0 = match sc.initial_theta {
        InitialTheta::Zero => DMatrix::zeros(ell, fmap.dim()),
        InitialTheta::Fitted => fit.theta.clone(),
    };
    let mut ctrl = AdaptiveControllerState {
        k_x: sys.k_x.clone(),
        theta: theta0,
        k_r: sys.k_r.clone(),
        gamma_x: sc.gains.gamma_x.clone(),
        gamma_theta: sc.gains.gamma_theta.clone(),
        gamma_r: sc.gains.gamma_r.clone(),
        blend_radius: sc.radius,
        fallback_gain: sc.fallback_gain,
        adaptation: true,
        projection_bound: sc.projection_bound,
    };
    let settings = SimSettings {
        horizon: sc.horizon,
        dt: sc.dt,
        x0,
        x_r0,
        record_every: sc.record_every,
    };
    let adaptive_tr = simulate(&sys, &ctrl, &fmap, &sc.reference, &settings)?;
    ctrl.adaptation = false;
    let frozen_tr = simulate(&sys, &ctrl, &fmap, &sc.reference, &settings)?;

    let adaptive = RunSummary::of(&adaptive_tr);
    let frozen = RunSummary::of(&frozen_tr);
    let ultimate_bound = conditions.ultimate_bound;
    Ok(ScenarioOutcome {
        n,
        ell,
        m: sc.m,
        seed: sc.seed,
        p: sys.p.clone(),
        q: sys.q.clone(),
        k_x: sys.k_x.clone(),
        k_r: sys.k_r.clone(),
        within_bound: adaptive.steady_error <= sc.bound_factor * ultimate_bound,
        improvement: frozen.steady_error / adaptive.steady_error,
        fit,
        conditions,
        ultimate_bound,
        bound_factor: sc.bound_factor,
        adaptive,
        frozen,
        trajectory: Some(adaptive_tr),
    })
}
