//! Closed-loop simulation and the condition report.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::lyapunov::{is_positive_definite, norm2};
use super::ode::{Rk4, VectorField};
use super::{epsilon_max, tracking_ultimate_bound, FeatureMap, MracSystem, Nonlinearity};
use crate::analysis::ball_grid;
use crate::error::{Error, Result};
use crate::linalg::norm;

/// States beyond this norm abort the simulation.
pub const DIVERGENCE_NORM: f64 = 1e6;

/// Largest accepted `dt` relative to the fastest reference time constant.
pub const MAX_STEP_FRACTION: f64 = 1e-3;

/// A symmetric positive definite adaptation gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Gain {
    /// `γ I`.
    Scalar(f64),
    Diagonal(Vec<f64>),
    /// Row-major dense matrix.
    Full(Vec<Vec<f64>>),
}

impl Gain {
    pub fn validate(&self, dim: usize) -> Result<()> {
        let ok = match self {
            Gain::Scalar(g) => g.is_finite() && *g > 0.0,
            Gain::Diagonal(d) => d.len() == dim && d.iter().all(|g| g.is_finite() && *g > 0.0),
            Gain::Full(rows) => {
                rows.len() == dim
                    && rows.iter().all(|r| r.len() == dim)
                    && is_positive_definite(&DMatrix::from_fn(dim, dim, |i, j| rows[i][j]))
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "adaptation gain must be a symmetric positive definite {dim}×{dim} matrix"
            )))
        }
    }

    /// `out = Γ v`.
    pub fn apply(&self, v: &[f64], out: &mut [f64]) {
        match self {
            Gain::Scalar(g) => {
                for (o, x) in out.iter_mut().zip(v) {
                    *o = g * x;
                }
            }
            Gain::Diagonal(d) => {
                for ((o, x), g) in out.iter_mut().zip(v).zip(d) {
                    *o = g * x;
                }
            }
            Gain::Full(rows) => {
                for (o, row) in out.iter_mut().zip(rows) {
                    *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
                }
            }
        }
    }
}

/// `μ(x)`: 0 on `‖x‖ ≤ R`, 1 on `‖x‖ ≥ 1.25R`, `C^∞` in between.
pub fn blend_weight(x: &[f64], radius: f64) -> f64 {
    let s = (norm(x) - radius) / (0.25 * radius);
    if s <= 0.0 {
        return 0.0;
    }
    if s >= 1.0 {
        return 1.0;
    }
    let phi = |u: f64| (-1.0 / u).exp();
    phi(s) / (phi(s) + phi(1.0 - s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveControllerState {
    /// `ℓ×n`.
    #[serde(with = "super::matrix_rows")]
    pub k_x: DMatrix<f64>,
    /// `ℓ×(m+n+1)`.
    #[serde(with = "super::matrix_rows")]
    pub theta: DMatrix<f64>,
    /// `ℓ×ℓ`.
    #[serde(with = "super::matrix_rows")]
    pub k_r: DMatrix<f64>,
    pub gamma_x: Gain,
    pub gamma_theta: Gain,
    pub gamma_r: Gain,
    /// Radius where `μ` starts to rise.
    pub blend_radius: f64,
    /// `k_f` in `ũ(x) = −k_f B⁺ x`.
    pub fallback_gain: f64,
    pub adaptation: bool,
    /// Entry-wise box for the adaptive parameters.
    pub projection_bound: Option<f64>,
}

impl AdaptiveControllerState {
    pub fn validate(&self, sys: &MracSystem, fmap: &FeatureMap) -> Result<()> {
        let (n, ell, k) = (sys.n(), sys.ell(), fmap.dim());
        if self.k_x.shape() != (ell, n) || self.theta.shape() != (ell, k) || self.k_r.shape() != (ell, ell) {
            return Err(Error::invalid(format!(
                "controller shapes K_x {:?}, Θ {:?}, K_r {:?} do not match ℓ = {ell}, n = {n}, m+n+1 = {k}",
                self.k_x.shape(),
                self.theta.shape(),
                self.k_r.shape()
            )));
        }
        self.gamma_x.validate(n)?;
        self.gamma_theta.validate(k)?;
        self.gamma_r.validate(ell)?;
        if !(self.blend_radius > 0.0 && self.fallback_gain >= 0.0) {
            return Err(Error::invalid("blend radius must be positive and k_f nonnegative"));
        }
        if let Some(b) = self.projection_bound {
            if b.is_nan() || b <= 0.0 {
                return Err(Error::invalid("projection bound must be positive"));
            }
        }
        if fmap.n != n {
            return Err(Error::invalid("feature map dimension differs from the plant's"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ReferenceInput {
    Constant {
        value: Vec<f64>,
    },
    /// `+amplitude` on the first half of each period, `−amplitude` on the second.
    SquareWave {
        amplitude: Vec<f64>,
        period: f64,
    },
    Sinusoid {
        amplitude: Vec<f64>,
        period: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl ReferenceInput {
    pub fn dim(&self) -> usize {
        match self {
            ReferenceInput::Constant { value } => value.len(),
            ReferenceInput::SquareWave { amplitude, .. } | ReferenceInput::Sinusoid { amplitude, .. } => {
                amplitude.len()
            }
        }
    }

    pub fn validate(&self, ell: usize) -> Result<()> {
        if self.dim() != ell {
            return Err(Error::invalid(format!("reference input has {} entries, expected {ell}", self.dim())));
        }
        match self {
            ReferenceInput::SquareWave { period, .. } | ReferenceInput::Sinusoid { period, .. }
                if !(period.is_finite() && *period > 0.0) =>
            {
                Err(Error::invalid("reference period must be positive"))
            }
            _ => Ok(()),
        }
    }

    pub fn value_into(&self, t: f64, out: &mut [f64]) {
        match self {
            ReferenceInput::Constant { value } => out.copy_from_slice(value),
            ReferenceInput::SquareWave { amplitude, period } => {
                let s = if (t / period).rem_euclid(1.0) < 0.5 { 1.0 } else { -1.0 };
                for (o, a) in out.iter_mut().zip(amplitude) {
                    *o = s * a;
                }
            }
            ReferenceInput::Sinusoid { amplitude, period, phase } => {
                let s = (2.0 * PI * t / period + phase).sin();
                for (o, a) in out.iter_mut().zip(amplitude) {
                    *o = s * a;
                }
            }
        }
    }

    pub fn value(&self, t: f64) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        self.value_into(t, &mut v);
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimSettings {
    pub horizon: f64,
    pub dt: f64,
    pub x0: Vec<f64>,
    pub x_r0: Vec<f64>,
    /// Keep every `record_every`-th step (plus the last) in the trajectory.
    pub record_every: usize,
}

/// Sampled closed-loop trajectory. `error_norm` holds `‖e‖` at every step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dt: f64,
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub x_r: Vec<Vec<f64>>,
    pub e: Vec<Vec<f64>>,
    pub u: Vec<Vec<f64>>,
    pub k_x_norm: Vec<f64>,
    pub theta_norm: Vec<f64>,
    pub k_r_norm: Vec<f64>,
    pub error_norm: Vec<f64>,
    /// Steps at which projection clipped at least one parameter.
    pub projection_steps: usize,
    pub final_state: Vec<f64>,
}

impl Trajectory {
    /// `max ‖e(t)‖` over steps with `t ≥ start`.
    pub fn max_error_after(&self, start: f64) -> f64 {
        let first = (start / self.dt).ceil() as usize;
        self.error_norm[first.min(self.error_norm.len() - 1)..]
            .iter()
            .copied()
            .fold(0.0, f64::max)
    }

    /// `max ‖e‖` over the final half of the horizon.
    pub fn steady_error(&self) -> f64 {
        let horizon = self.dt * (self.error_norm.len() - 1) as f64;
        self.max_error_after(0.5 * horizon)
    }
}

/// The closed loop as a vector field on `[x, xᵣ, K̂_x, Θ̂, K̂_r]` (row-major).
pub struct ClosedLoop<'a> {
    sys: &'a MracSystem,
    ctrl: &'a AdaptiveControllerState,
    fmap: &'a FeatureMap,
    reference: &'a ReferenceInput,
    b_pinv: DMatrix<f64>,
    pb: DMatrix<f64>,
}

struct Layout {
    n: usize,
    ell: usize,
    k: usize,
}

impl Layout {
    fn x(&self) -> std::ops::Range<usize> {
        0..self.n
    }
    fn xr(&self) -> std::ops::Range<usize> {
        self.n..2 * self.n
    }
    fn kx(&self) -> std::ops::Range<usize> {
        2 * self.n..2 * self.n + self.ell * self.n
    }
    fn theta(&self) -> std::ops::Range<usize> {
        let s = self.kx().end;
        s..s + self.ell * self.k
    }
    fn kr(&self) -> std::ops::Range<usize> {
        let s = self.theta().end;
        s..s + self.ell * self.ell
    }
    fn len(&self) -> usize {
        self.kr().end
    }
    fn params(&self) -> std::ops::Range<usize> {
        self.kx().start..self.len()
    }
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    m.transpose().as_slice().to_vec()
}

impl<'a> ClosedLoop<'a> {
    pub fn new(
        sys: &'a MracSystem,
        ctrl: &'a AdaptiveControllerState,
        fmap: &'a FeatureMap,
        reference: &'a ReferenceInput,
    ) -> Result<Self> {
        ctrl.validate(sys, fmap)?;
        reference.validate(sys.ell())?;
        let b_pinv = sys
            .b
            .clone()
            .pseudo_inverse(1e-14)
            .map_err(|e| Error::numerical(format!("pseudo-inverse of B: {e}")))?;
        let pb = &sys.p * &sys.b;
        Ok(Self {
            sys,
            ctrl,
            fmap,
            reference,
            b_pinv,
            pb,
        })
    }

    fn layout(&self) -> Layout {
        Layout {
            n: self.sys.n(),
            ell: self.sys.ell(),
            k: self.fmap.dim(),
        }
    }

    pub fn state_dim(&self) -> usize {
        self.layout().len()
    }

    pub fn initial_state(&self, x0: &[f64], x_r0: &[f64]) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.state_dim());
        y.extend_from_slice(x0);
        y.extend_from_slice(x_r0);
        y.extend(row_major(&self.ctrl.k_x));
        y.extend(row_major(&self.ctrl.theta));
        y.extend(row_major(&self.ctrl.k_r));
        y
    }

    /// Control `u` at time `t` for state `y`.
    pub fn control(&self, t: f64, y: &[f64]) -> Vec<f64> {
        let l = self.layout();
        let x = &y[l.x()];
        let mut psi = vec![0.0; l.k];
        self.fmap.eval_into(x, &mut psi);
        let r = self.reference.value(t);
        self.control_with(y, &l, x, &psi, &r)
    }

    fn control_with(&self, y: &[f64], l: &Layout, x: &[f64], psi: &[f64], r: &[f64]) -> Vec<f64> {
        let mu = blend_weight(x, self.ctrl.blend_radius);
        let kx = &y[l.kx()];
        let th = &y[l.theta()];
        let kr = &y[l.kr()];
        (0..l.ell)
            .map(|i| {
                let fb: f64 = kx[i * l.n..(i + 1) * l.n].iter().zip(x).map(|(a, b)| a * b).sum();
                let ad: f64 = th[i * l.k..(i + 1) * l.k].iter().zip(psi).map(|(a, b)| a * b).sum();
                let ff: f64 = kr[i * l.ell..(i + 1) * l.ell].iter().zip(r).map(|(a, b)| a * b).sum();
                let fallback: f64 = if mu > 0.0 {
                    -self.ctrl.fallback_gain * (0..l.n).map(|j| self.b_pinv[(i, j)] * x[j]).sum::<f64>()
                } else {
                    0.0
                };
                fb - ad + (1.0 - mu) * ff + mu * fallback
            })
            .collect()
    }

    fn project(&self, y: &mut [f64]) -> bool {
        let Some(b) = self.ctrl.projection_bound else {
            return false;
        };
        let mut clipped = false;
        for v in &mut y[self.layout().params()] {
            if v.abs() > b {
                *v = v.clamp(-b, b);
                clipped = true;
            }
        }
        clipped
    }
}

impl VectorField for ClosedLoop<'_> {
    fn eval(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let l = self.layout();
        let (n, ell, k) = (l.n, l.ell, l.k);
        let x = &y[l.x()];
        let xr = &y[l.xr()];
        let mut psi = vec![0.0; k];
        self.fmap.eval_into(x, &mut psi);
        let r = self.reference.value(t);
        let u = self.control_with(y, &l, x, &psi, &r);
        let mut fx = vec![0.0; ell];
        self.sys.f.eval_into(x, &mut fx);

        for i in 0..n {
            let ax: f64 = x.iter().enumerate().map(|(j, xj)| self.sys.a[(i, j)] * xj).sum();
            let bu: f64 = (0..ell).map(|j| self.sys.b[(i, j)] * (u[j] + fx[j])).sum();
            dy[i] = ax + bu;
            let ar: f64 = xr.iter().enumerate().map(|(j, v)| self.sys.a_r[(i, j)] * v).sum();
            let br: f64 = r.iter().enumerate().map(|(j, v)| self.sys.b_r[(i, j)] * v).sum();
            dy[n + i] = ar + br;
        }

        let params = l.params();
        if !self.ctrl.adaptation {
            dy[params].fill(0.0);
            return;
        }
        // s = BᵀP e
        let s: Vec<f64> = (0..ell)
            .map(|i| (0..n).map(|j| self.pb[(j, i)] * (x[j] - xr[j])).sum())
            .collect();
        let mut gx = vec![0.0; n];
        self.ctrl.gamma_x.apply(x, &mut gx);
        let mut gpsi = vec![0.0; k];
        self.ctrl.gamma_theta.apply(&psi, &mut gpsi);
        let mut gr = vec![0.0; ell];
        self.ctrl.gamma_r.apply(&r, &mut gr);
        let (kx0, th0, kr0) = (l.kx().start, l.theta().start, l.kr().start);
        for i in 0..ell {
            for j in 0..n {
                dy[kx0 + i * n + j] = -s[i] * gx[j];
            }
            for j in 0..k {
                dy[th0 + i * k + j] = s[i] * gpsi[j];
            }
            for j in 0..ell {
                dy[kr0 + i * ell + j] = -s[i] * gr[j];
            }
        }
    }
}

/// Closed-loop RK4 simulation. Requires `dt ≤ 10⁻³ · τ_min(A_r)`.
pub fn simulate(
    sys: &MracSystem,
    ctrl: &AdaptiveControllerState,
    fmap: &FeatureMap,
    reference: &ReferenceInput,
    settings: &SimSettings,
) -> Result<Trajectory> {
    let limit = MAX_STEP_FRACTION * sys.fastest_time_constant();
    if !(settings.dt > 0.0 && settings.dt <= limit * (1.0 + 1e-12)) {
        return Err(Error::invalid(format!(
            "dt = {} must be positive and at most {limit:e} (10⁻³ of the fastest reference time constant)",
            settings.dt
        )));
    }
    integrate_closed_loop(sys, ctrl, fmap, reference, settings)
}

/// [`simulate`] without the step-size precondition, for convergence studies.
pub fn integrate_closed_loop(
    sys: &MracSystem,
    ctrl: &AdaptiveControllerState,
    fmap: &FeatureMap,
    reference: &ReferenceInput,
    settings: &SimSettings,
) -> Result<Trajectory> {
    let n = sys.n();
    if !(settings.horizon > 0.0 && settings.horizon.is_finite()) {
        return Err(Error::invalid("horizon must be positive"));
    }
    if settings.x0.len() != n || settings.x_r0.len() != n {
        return Err(Error::invalid(format!("initial states must have length {n}")));
    }
    if settings.record_every == 0 {
        return Err(Error::invalid("record_every must be at least 1"));
    }
    let cl = ClosedLoop::new(sys, ctrl, fmap, reference)?;
    let l = cl.layout();
    let dt = settings.dt;
    let steps = (settings.horizon / dt).round() as usize;
    let mut y = cl.initial_state(&settings.x0, &settings.x_r0);
    let mut rk = Rk4::new(y.len());
    let mut tr = Trajectory {
        dt,
        t: Vec::new(),
        x: Vec::new(),
        x_r: Vec::new(),
        e: Vec::new(),
        u: Vec::new(),
        k_x_norm: Vec::new(),
        theta_norm: Vec::new(),
        k_r_norm: Vec::new(),
        error_norm: Vec::with_capacity(steps + 1),
        projection_steps: 0,
        final_state: Vec::new(),
    };
    let record = |tr: &mut Trajectory, t: f64, y: &[f64]| {
        let x = y[l.x()].to_vec();
        let xr = y[l.xr()].to_vec();
        let e: Vec<f64> = x.iter().zip(&xr).map(|(a, b)| a - b).collect();
        tr.u.push(cl.control(t, y));
        tr.t.push(t);
        tr.x.push(x);
        tr.x_r.push(xr);
        tr.e.push(e);
        tr.k_x_norm.push(norm(&y[l.kx()]));
        tr.theta_norm.push(norm(&y[l.theta()]));
        tr.k_r_norm.push(norm(&y[l.kr()]));
    };
    let error_norm = |y: &[f64]| -> f64 {
        y[l.x()]
            .iter()
            .zip(&y[l.xr()])
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    };
    record(&mut tr, 0.0, &y);
    tr.error_norm.push(error_norm(&y));
    for i in 0..steps {
        let t = i as f64 * dt;
        rk.step(&cl, t, &mut y, dt);
        if cl.project(&mut y) {
            tr.projection_steps += 1;
        }
        let xn = norm(&y[l.x()]);
        if xn.is_nan() || xn > DIVERGENCE_NORM || y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Divergence {
                time: t + dt,
                detail: format!("‖x‖ = {xn:e} exceeds {DIVERGENCE_NORM:e}"),
            });
        }
        tr.error_norm.push(error_norm(&y));
        if (i + 1) % settings.record_every == 0 || i + 1 == steps {
            record(&mut tr, (i + 1) as f64 * dt, &y);
        }
    }
    tr.final_state = y;
    Ok(tr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionCheck {
    pub label: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    /// Positive when satisfied.
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionSettings {
    pub eps0: f64,
    pub radius: f64,
    /// Points per axis of the grid over `B₀(R)`.
    pub grid_density: usize,
    /// Condition (i) is checked on `B₀(wide_factor · R)`.
    pub wide_factor: f64,
    pub p_min: f64,
    pub reference: ReferenceInput,
    pub x_r0: Vec<f64>,
    pub horizon: f64,
    pub dt: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionReport {
    pub eps0: f64,
    pub radius: f64,
    pub p_norm: f64,
    pub q_inv_norm: f64,
    pub ultimate_bound: f64,
    pub reference_sup: f64,
    pub max_fit_error: f64,
    pub conditions: Vec<ConditionCheck>,
}

impl ConditionReport {
    pub fn all_pass(&self) -> bool {
        self.conditions.iter().all(|c| c.pass)
    }
}

fn fit_error(sys: &MracSystem, fmap: &FeatureMap, theta: &DMatrix<f64>, x: &[f64], psi: &mut [f64]) -> f64 {
    fmap.eval_into(x, psi);
    let f = sys.f.eval(x);
    (0..sys.ell())
        .map(|i| {
            let v: f64 = (0..psi.len()).map(|j| theta[(i, j)] * psi[j]).sum();
            (f[i] - v).powi(2)
        })
        .sum::<f64>()
        .sqrt()
}

/// Evaluates the three standing assumptions of the ultimate-bound result for
/// a given parameter matrix `Θ`. Report only; never fails on a violated
/// condition.
pub fn check_theorem2_conditions(
    sys: &MracSystem,
    fmap: &FeatureMap,
    theta: &DMatrix<f64>,
    settings: &ConditionSettings,
) -> Result<ConditionReport> {
    let (n, ell) = (sys.n(), sys.ell());
    if theta.shape() != (ell, fmap.dim()) {
        return Err(Error::invalid(format!(
            "Θ is {:?}, expected ({ell}, {})",
            theta.shape(),
            fmap.dim()
        )));
    }
    settings.reference.validate(ell)?;
    if settings.x_r0.len() != n {
        return Err(Error::invalid("x_r0 has the wrong length"));
    }
    if !(1.0..).contains(&settings.wide_factor) {
        return Err(Error::invalid("wide_factor must be at least 1"));
    }
    let r = settings.radius;
    let mut psi = vec![0.0; fmap.dim()];

    // (i) pointwise bounding function on a wider ball
    let rho = sys.f.rho();
    let mut worst_ratio: f64 = 0.0;
    let mut margin_i = f64::INFINITY;
    for x in ball_grid(n, settings.wide_factor * r, settings.grid_density)? {
        let err = fit_error(sys, fmap, theta, &x, &mut psi);
        let bound = if matches!(sys.f, Nonlinearity::Zero { .. }) {
            0.0
        } else {
            epsilon_max(&x, rho, n, ell, fmap.m(), r, settings.p_min)?
        };
        margin_i = margin_i.min(bound - err);
        if bound > 0.0 {
            worst_ratio = worst_ratio.max(err / bound);
        } else if err > 0.0 {
            worst_ratio = f64::INFINITY;
        }
    }

    // (ii) radius covers the ultimate bound plus the reference excursion
    let ultimate = tracking_ultimate_bound(&sys.p, &sys.q, settings.eps0)?;
    let reference_sup = reference_sup(sys, &settings.reference, &settings.x_r0, settings.horizon, settings.dt)?;
    let need = ultimate + reference_sup;

    // (iii) sup of the fit error over B₀(R)
    let max_fit_error = ball_grid(n, r, settings.grid_density)?
        .iter()
        .map(|x| fit_error(sys, fmap, theta, x, &mut psi))
        .fold(0.0, f64::max);

    let q_inv_norm = 1.0 / sys.q.singular_values().min();
    Ok(ConditionReport {
        eps0: settings.eps0,
        radius: r,
        p_norm: norm2(&sys.p),
        q_inv_norm,
        ultimate_bound: ultimate,
        reference_sup,
        max_fit_error,
        conditions: vec![
            ConditionCheck {
                label: "(i) |f - Theta Psi| <= eps_max(x) on the wide grid".into(),
                pass: margin_i >= 0.0,
                value: worst_ratio,
                threshold: 1.0,
                margin: margin_i,
            },
            ConditionCheck {
                label: "(ii) R >= 4|P||Q^-1|eps0 + sup|x_r|".into(),
                pass: r >= need,
                value: need,
                threshold: r,
                margin: r - need,
            },
            ConditionCheck {
                label: "(iii) sup over B0(R) of |f - Theta Psi| <= eps0".into(),
                pass: max_fit_error <= settings.eps0,
                value: max_fit_error,
                threshold: settings.eps0,
                margin: settings.eps0 - max_fit_error,
            },
        ],
    })
}

/// `sup_t ‖xᵣ(t)‖` of the reference model over `[0, horizon]`.
pub fn reference_sup(
    sys: &MracSystem,
    reference: &ReferenceInput,
    x_r0: &[f64],
    horizon: f64,
    dt: f64,
) -> Result<f64> {
    reference.validate(sys.ell())?;
    if !(horizon > 0.0 && dt > 0.0) {
        return Err(Error::invalid("horizon and dt must be positive"));
    }
    let n = sys.n();
    let field = |t: f64, y: &[f64], dy: &mut [f64]| {
        let r = reference.value(t);
        for (i, d) in dy.iter_mut().enumerate() {
            *d = (0..n).map(|j| sys.a_r[(i, j)] * y[j]).sum::<f64>()
                + (0..sys.ell()).map(|j| sys.b_r[(i, j)] * r[j]).sum::<f64>();
        }
    };
    let mut y = x_r0.to_vec();
    let mut rk = Rk4::new(n);
    let mut sup = norm(&y);
    let steps = (horizon / dt).round() as usize;
    for i in 0..steps {
        rk.step(&field, i as f64 * dt, &mut y, dt);
        sup = sup.max(norm(&y));
    }
    Ok(sup)
}
