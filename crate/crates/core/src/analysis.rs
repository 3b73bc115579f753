//! Certified sup-norm errors, the high-probability error-bound calculators
//! and the `m`-scaling studies.

use std::f64::consts::PI;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::fitting::{least_squares_fit, FitProblem};
use crate::linalg::norm;
use crate::network::{importance_coefficients, ReluNetwork};
use crate::representation::RepresentationOracle;
use crate::sampling::ParamDensity;
use crate::targets::{sphere_area, SmoothTarget};

/// Smallest accepted points-per-axis for [`sup_error`].
pub const MIN_GRID_DENSITY: usize = 101;

/// Anything with point values and a global Lipschitz constant.
pub trait Approximand: Sync {
    fn dim(&self) -> usize;
    fn value(&self, x: &[f64]) -> f64;
    fn lipschitz_bound(&self) -> f64;
}

impl Approximand for SmoothTarget {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        SmoothTarget::value(self, x)
    }

    fn lipschitz_bound(&self) -> f64 {
        SmoothTarget::lipschitz_bound(self)
    }
}

impl Approximand for ReluNetwork {
    fn dim(&self) -> usize {
        self.n
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.evaluate(x)
    }

    fn lipschitz_bound(&self) -> f64 {
        ReluNetwork::lipschitz_bound(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SupError {
    /// Largest `|approx − target|` on the grid.
    pub estimate: f64,
    /// `(L_approx + L_target) · h√n / 2`.
    pub slack: f64,
    /// `estimate + slack`, an upper bound on the sup over `B₀(R)`.
    pub certified_bound: f64,
    pub grid_points: usize,
    pub spacing: f64,
}

/// Sup of `|approx − target|` over `B₀(R)` from a regular grid with
/// `grid_density` points per axis on `[−R, R]`.
///
/// Every point of the ball is within `h√n/2` of a grid node that is itself
/// within that distance of the ball, so the grid max plus the Lipschitz slack
/// bounds the true sup. Densities `G` and `2G − 1` give nested grids.
pub fn sup_error<A, T>(approx: &A, target: &T, radius: f64, grid_density: usize) -> Result<SupError>
where
    A: Approximand + ?Sized,
    T: Approximand + ?Sized,
{
    sup_error_with(approx, target, radius, grid_density, Execution::default())
}

pub fn sup_error_with<A, T>(
    approx: &A,
    target: &T,
    radius: f64,
    grid_density: usize,
    exec: Execution,
) -> Result<SupError>
where
    A: Approximand + ?Sized,
    T: Approximand + ?Sized,
{
    let n = approx.dim();
    if target.dim() != n {
        return Err(Error::invalid(format!(
            "approximant in dimension {n} compared with target in dimension {}",
            target.dim()
        )));
    }
    if grid_density < MIN_GRID_DENSITY {
        return Err(Error::invalid(format!(
            "grid density {grid_density} below the minimum {MIN_GRID_DENSITY}"
        )));
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::invalid(format!("radius must be positive, got {radius}")));
    }
    let total = (grid_density as u128).pow(n as u32);
    if total > 1 << 32 {
        return Err(Error::invalid(format!("{grid_density}^{n} grid points is too many")));
    }
    let total = total as usize;
    let h = 2.0 * radius / (grid_density - 1) as f64;
    let reach = h * (n as f64).sqrt() / 2.0;
    let keep = radius + reach;

    let node = |mut idx: usize, x: &mut Vec<f64>| {
        for xi in x.iter_mut() {
            *xi = -radius + h * (idx % grid_density) as f64;
            idx /= grid_density;
        }
    };
    let estimate = exec.max_range(total, |i| {
        let mut x = vec![0.0; n];
        node(i, &mut x);
        if n > 1 && norm(&x) > keep {
            return 0.0;
        }
        (approx.value(&x) - target.value(&x)).abs()
    });
    let grid_points = if n == 1 {
        total
    } else {
        let mut x = vec![0.0; n];
        (0..total)
            .filter(|&i| {
                node(i, &mut x);
                norm(&x) <= keep
            })
            .count()
    };
    let slack = (approx.lipschitz_bound() + target.lipschitz_bound()) * reach;
    Ok(SupError {
        estimate,
        slack,
        certified_bound: estimate + slack,
        grid_points,
        spacing: h,
    })
}

/// Regular grid with `grid_density` points per axis on `[−R, R]ⁿ`, restricted
/// to `‖x‖ ≤ R` for `n ≥ 2`.
pub fn ball_grid(n: usize, radius: f64, grid_density: usize) -> Result<Vec<Vec<f64>>> {
    if n == 0 || grid_density < 2 || !(radius.is_finite() && radius > 0.0) {
        return Err(Error::invalid("ball grid needs n ≥ 1, density ≥ 2 and a positive radius"));
    }
    let total = (grid_density as u128).pow(n as u32);
    if total > 1 << 26 {
        return Err(Error::invalid(format!("{grid_density}^{n} grid points is too many")));
    }
    let h = 2.0 * radius / (grid_density - 1) as f64;
    Ok((0..total as usize)
        .map(|mut idx| {
            let mut x = vec![0.0; n];
            for xi in &mut x {
                *xi = -radius + h * (idx % grid_density) as f64;
                idx /= grid_density;
            }
            x
        })
        .filter(|x| n == 1 || norm(x) <= radius * (1.0 + 1e-12))
        .collect())
}

/// Inputs of the high-probability sup-error bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorBoundInputs {
    pub n: usize,
    #[serde(rename = "R")]
    pub radius: f64,
    pub rho: f64,
    pub p_min: f64,
    pub m: usize,
    /// Failure probability in `(0, 1)`.
    pub nu: f64,
}

impl ErrorBoundInputs {
    /// Inputs for the uniform law, `P_min = 1 / (2R A_{n-1})`.
    pub fn uniform(n: usize, radius: f64, rho: f64, m: usize, nu: f64) -> Result<Self> {
        let p_min = 1.0 / (2.0 * radius * sphere_area(n)?);
        let inputs = Self {
            n,
            radius,
            rho,
            p_min,
            m,
            nu,
        };
        inputs.validate()?;
        Ok(inputs)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(Error::invalid("dimension must be positive"));
        }
        if self.m == 0 {
            return Err(Error::invalid("m must be positive"));
        }
        for (name, v) in [("R", self.radius), ("rho", self.rho), ("p_min", self.p_min)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            return Err(Error::invalid(format!("nu must lie in (0, 1), got {}", self.nu)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub kappa0: f64,
    pub kappa1: f64,
}

/// `κ₀ = 512 √n π^{5/2} R ρ (π/P_min + A_{n-1})` and
/// `κ₁ = 264 π² ρ R / P_min + ρ A_{n-1} (4 + 256 R π)`.
pub fn theorem1_constants(inputs: &ErrorBoundInputs) -> Result<BoundConstants> {
    inputs.validate()?;
    let ErrorBoundInputs { n, radius: r, rho, p_min, .. } = *inputs;
    let area = sphere_area(n)?;
    Ok(BoundConstants {
        kappa0: 512.0 * (n as f64).sqrt() * PI.powf(2.5) * r * rho * (PI / p_min + area),
        kappa1: 264.0 * PI * PI * rho * r / p_min + rho * area * (4.0 + 256.0 * r * PI),
    })
}

/// `(κ₀ + κ₁ √log(4/ν)) / √m`.
pub fn theorem1_bound(inputs: &ErrorBoundInputs) -> Result<f64> {
    let k = theorem1_constants(inputs)?;
    Ok(combine(k, inputs.nu, inputs.m))
}

fn combine(k: BoundConstants, nu: f64, m: usize) -> f64 {
    (k.kappa0 + k.kappa1 * (4.0 / nu).ln().sqrt()) / (m as f64).sqrt()
}

/// Constants of the bound specialised to the uniform law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformBoundConstants {
    /// `512 √n π^{5/2} R ρ A_{n-1} (1 + 2πR)`.
    pub kappa0: f64,
    /// `ρ A_{n-1} (528 (πR)² + 256 πR + 4)`.
    pub kappa1: f64,
    /// Cap on `|cᵢ|`: `8π²ρ/(m P_min) = 16 π² R ρ A_{n-1} / m`.
    pub coefficient_cap: f64,
}

pub fn corollary1_constants(n: usize, radius: f64, rho: f64, m: usize) -> Result<UniformBoundConstants> {
    let inputs = ErrorBoundInputs::uniform(n, radius, rho, m, 0.5)?;
    let area = sphere_area(n)?;
    let pr = PI * radius;
    Ok(UniformBoundConstants {
        kappa0: 512.0 * (n as f64).sqrt() * PI.powf(2.5) * radius * rho * area * (1.0 + 2.0 * pr),
        kappa1: rho * area * (528.0 * pr * pr + 256.0 * pr + 4.0),
        coefficient_cap: 16.0 * PI * PI * radius * rho * area / inputs.m as f64,
    })
}

/// The bound for the uniform law. `inputs.p_min` must be the uniform value.
pub fn corollary1_bound(inputs: &ErrorBoundInputs) -> Result<f64> {
    inputs.validate()?;
    let uniform = 1.0 / (2.0 * inputs.radius * sphere_area(inputs.n)?);
    if (inputs.p_min - uniform).abs() > 1e-12 * uniform {
        return Err(Error::invalid(format!(
            "p_min {} is not the uniform density {uniform}",
            inputs.p_min
        )));
    }
    let c = corollary1_constants(inputs.n, inputs.radius, inputs.rho, inputs.m)?;
    Ok(combine(
        BoundConstants {
            kappa0: c.kappa0,
            kappa1: c.kappa1,
        },
        inputs.nu,
        inputs.m,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImportanceConstants {
    /// `8π²ρR/P_min + 4ρA_{n-1}(1 + Rπ)`.
    pub gamma: f64,
    /// `8π²ρ/P_min + 8πA_{n-1}ρ`.
    #[serde(rename = "L")]
    pub lipschitz: f64,
}

pub fn importance_constants(n: usize, radius: f64, rho: f64, p_min: f64) -> Result<ImportanceConstants> {
    for (name, v) in [("R", radius), ("rho", rho), ("p_min", p_min)] {
        if !(v.is_finite() && v > 0.0) {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    let area = sphere_area(n)?;
    Ok(ImportanceConstants {
        gamma: 8.0 * PI * PI * rho * radius / p_min + 4.0 * rho * area * (1.0 + radius * PI),
        lipschitz: 8.0 * PI * PI * rho / p_min + 8.0 * PI * area * rho,
    })
}

/// Observed coefficient magnitudes against the boxes satisfied by every
/// importance-constructed network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientBoxes {
    pub a_norm: f64,
    /// `4π A_{n−1} ρ`.
    pub a_cap: f64,
    pub b_abs: f64,
    /// `(1 + 2πR) A_{n−1} ρ`.
    pub b_cap: f64,
    pub c_max: f64,
    /// `8π²ρ / (m P_min)`.
    pub c_cap: f64,
    /// Number of `a`, `b` and `cᵢ` entries outside their box.
    pub violations: usize,
}

pub fn coefficient_boxes(net: &ReluNetwork, rho: f64, p_min: f64) -> Result<CoefficientBoxes> {
    if !(rho > 0.0 && p_min > 0.0) || net.m() == 0 {
        return Err(Error::invalid("coefficient boxes need ρ > 0, P_min > 0 and m ≥ 1"));
    }
    let area = sphere_area(net.n)?;
    let a_cap = 4.0 * PI * area * rho;
    let b_cap = (1.0 + 2.0 * PI * net.radius) * area * rho;
    let c_cap = 8.0 * PI * PI * rho / (net.m() as f64 * p_min);
    let a_norm = norm(&net.a);
    let b_abs = net.b.abs();
    let c_max = net.units.iter().map(|u| u.c.abs()).fold(0.0, f64::max);
    let violations = usize::from(a_norm > a_cap)
        + usize::from(b_abs > b_cap)
        + net.units.iter().filter(|u| u.c.abs() > c_cap).count();
    Ok(CoefficientBoxes {
        a_norm,
        a_cap,
        b_abs,
        b_cap,
        c_max,
        c_cap,
        violations,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMode {
    Importance,
    LeastSquares,
}

impl FitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            FitMode::Importance => "importance",
            FitMode::LeastSquares => "least_squares",
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct StudyOptions {
    /// Points per axis handed to [`sup_error`].
    pub grid_density: usize,
    /// `ν` used for the reference bound reported per cell.
    pub nu: f64,
    pub exec: Execution,
    /// Wall-clock timing per cell; off keeps results reproducible.
    pub record_runtime: bool,
}

impl StudyOptions {
    pub fn for_dim(n: usize) -> Self {
        Self {
            grid_density: default_grid_density(n),
            nu: 0.1,
            exec: Execution::default(),
            record_runtime: false,
        }
    }
}

/// Dense enough that the Lipschitz slack stays small next to typical errors.
pub fn default_grid_density(n: usize) -> usize {
    match n {
        1 => 100_001,
        2 => 1_001,
        _ => MIN_GRID_DENSITY,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub m: usize,
    pub seed: u64,
    pub mode: FitMode,
    pub sup_error: f64,
    pub certified_bound: f64,
    pub theorem1_bound: f64,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianPoint {
    pub m: usize,
    pub median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingStudyResult {
    pub mode: FitMode,
    /// Ordered by `m`, then by position in the seed list.
    pub cells: Vec<StudyCell>,
    /// Median certified sup error per `m`.
    pub medians: Vec<MedianPoint>,
    /// OLS slope of `log median` against `log m`.
    pub slope: f64,
}

/// Builds one network per `(m, seed)` and certifies its sup error against the
/// oracle's target. Both modes share the hidden parameters for a given
/// `(m, seed)`.
pub fn scaling_study<D: ParamDensity>(
    oracle: &RepresentationOracle,
    dist: &D,
    m_list: &[usize],
    seeds: &[u64],
    mode: FitMode,
    opts: StudyOptions,
) -> Result<ScalingStudyResult> {
    if m_list.len() < 3 {
        return Err(Error::invalid("a scaling study needs at least 3 values of m"));
    }
    if m_list.windows(2).any(|w| w[0] >= w[1]) || m_list[0] == 0 {
        return Err(Error::invalid("m values must be positive and strictly increasing"));
    }
    if seeds.len() < 5 {
        return Err(Error::invalid("a scaling study needs at least 5 seeds"));
    }
    if dist.dim() != oracle.dim() || (dist.radius() - oracle.radius).abs() > 1e-12 * oracle.radius {
        return Err(Error::invalid("distribution and oracle disagree on n or R"));
    }
    let target = &oracle.target;
    let radius = oracle.radius;
    let cells_spec: Vec<(usize, u64)> = m_list
        .iter()
        .flat_map(|&m| seeds.iter().map(move |&s| (m, s)))
        .collect();

    let cells = opts.exec.map_slice(&cells_spec, |&(m, seed)| -> Result<StudyCell> {
        let start = Instant::now();
        let params = dist.sample_hidden_params_with(m, seed, Execution::Sequential);
        let net = match mode {
            FitMode::Importance => importance_coefficients(oracle, dist, &params, Execution::Sequential)?,
            FitMode::LeastSquares => {
                let problem = FitProblem::from_function(target.n, radius, params, |x| target.value(x))?;
                least_squares_fit(&problem)?.network
            }
        };
        let sup = sup_error_with(&net, target, radius, opts.grid_density, Execution::Sequential)?;
        let bound = theorem1_bound(&ErrorBoundInputs {
            n: target.n,
            radius,
            rho: target.rho,
            p_min: dist.p_min(),
            m,
            nu: opts.nu,
        })?;
        Ok(StudyCell {
            m,
            seed,
            mode,
            sup_error: sup.estimate,
            certified_bound: sup.certified_bound,
            theorem1_bound: bound,
            runtime_ms: if opts.record_runtime {
                start.elapsed().as_secs_f64() * 1e3
            } else {
                0.0
            },
        })
    });
    let cells = cells.into_iter().collect::<Result<Vec<_>>>()?;

    let medians: Vec<MedianPoint> = m_list
        .iter()
        .map(|&m| MedianPoint {
            m,
            median: median(cells.iter().filter(|c| c.m == m).map(|c| c.certified_bound)),
        })
        .collect();
    let slope = log_log_slope(&medians);
    Ok(ScalingStudyResult {
        mode,
        cells,
        medians,
        slope,
    })
}

pub fn median<I: IntoIterator<Item = f64>>(values: I) -> f64 {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let k = v.len() / 2;
    if v.len() % 2 == 1 {
        v[k]
    } else {
        0.5 * (v[k - 1] + v[k])
    }
}

/// OLS slope of `ln median` on `ln m`.
pub fn log_log_slope(points: &[MedianPoint]) -> f64 {
    let xs: Vec<f64> = points.iter().map(|p| (p.m as f64).ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.median.ln()).collect();
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}
