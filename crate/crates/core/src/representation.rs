//! Quadrature oracles for the ReLU integral representation of a smooth target
//! on the ball `B₀(R)`:
//!
//! ```text
//! f(x) = aᵀx + b + ∫_{S^{n-1}} ∫_{−R}^{R} h(α,t) σ(αᵀx − t) q(α) dt μ(dα)
//! ```
//!
//! Frequencies are integrated in polar form `ω = rα` with a composite
//! Gauss–Legendre rule on `[0, r_max]` and a [`SphereRule`] in `α`. The radial
//! cut-off is certified from the target's analytic spectral tail. Everything
//! needed downstream reduces to per-direction sums over the radial nodes; in
//! particular `h(α,t)q(α) = −∫₀^∞ 4π² r^{n+1} |f̂(rα)| cos(2π(rt + θ(rα))) dr`
//! never needs `Z` or a division by `q`.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::linalg::{dot, norm};
use crate::quad::{CompositeRule, SphereRule};
use crate::relu;
use crate::targets::SmoothTarget;

/// `q(α)` below this is treated as zero: `h` is undefined there and `h·q = 0`.
pub const Q_FLOOR: f64 = 1e-300;

/// Tolerance on `‖α‖ = 1` for direction arguments.
pub const UNIT_TOL: f64 = 1e-12;

/// Accepted interpolation error of the `h·q` lattice, in units of the
/// oracle tolerance.
pub const LATTICE_TOL_FACTOR: f64 = 10.0;

const FOUR_PI2: f64 = 4.0 * PI * PI;

/// Step sizes of the frequency quadrature. Doubling every count halves every
/// step. The inner `t`-integral is done in closed form per radial node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    /// Panels on `[0, r_max]`.
    pub radial_panels: usize,
    /// Angular resolution handed to [`SphereRule::new`].
    pub sphere: usize,
    /// Gauss–Legendre order per panel.
    pub order: usize,
}

impl Resolution {
    pub const INITIAL: Resolution = Resolution {
        radial_panels: 2,
        sphere: 8,
        order: 10,
    };

    pub fn refined(self) -> Self {
        Self {
            radial_panels: self.radial_panels * 2,
            sphere: self.sphere * 2,
            order: self.order,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    /// Absolute quadrature tolerance.
    pub tol: f64,
    /// Force the radial cut-off instead of deriving it from the tail bound.
    pub r_max: Option<f64>,
    /// Maximum number of resolution doublings (oracle and lattice each).
    pub max_refinements: usize,
    pub exec: Execution,
}

impl OracleOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            tol,
            ..Self::default()
        }
    }
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            tol: 1e-4,
            r_max: None,
            max_refinements: 7,
            exec: Execution::default(),
        }
    }
}

/// `h(α,t)` together with the product `h(α,t)q(α)`; `h` is `None` where
/// `q(α)` vanishes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelValue {
    pub h: Option<f64>,
    pub hq: f64,
}

/// Cached `h·q` on a regular (direction × t) lattice with multilinear
/// interpolation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HqLattice {
    pub dim: usize,
    pub radius: f64,
    /// Polar intervals (n = 3 only, nodes include both poles).
    pub polar: usize,
    /// Azimuthal nodes, periodic (n ≥ 2).
    pub azimuth: usize,
    pub t_points: usize,
    /// Row-major `[direction][t]`.
    pub values: Vec<f64>,
}

impl HqLattice {
    fn directions(dim: usize, polar: usize, azimuth: usize) -> Vec<Vec<f64>> {
        match dim {
            1 => vec![vec![-1.0], vec![1.0]],
            2 => (0..azimuth)
                .map(|i| {
                    let a = 2.0 * PI * i as f64 / azimuth as f64;
                    vec![a.cos(), a.sin()]
                })
                .collect(),
            _ => {
                let mut dirs = Vec::with_capacity((polar + 1) * azimuth);
                for j in 0..=polar {
                    let p = PI * j as f64 / polar as f64;
                    for i in 0..azimuth {
                        let a = 2.0 * PI * i as f64 / azimuth as f64;
                        dirs.push(vec![p.sin() * a.cos(), p.sin() * a.sin(), p.cos()]);
                    }
                }
                dirs
            }
        }
    }

    /// Weighted lattice directions `(direction index, weight)` around `alpha`.
    fn stencil(&self, alpha: &[f64]) -> Vec<(usize, f64)> {
        match self.dim {
            1 => vec![(usize::from(alpha[0] > 0.0), 1.0)],
            2 => {
                let (i0, i1, w) = periodic_cell(alpha[1].atan2(alpha[0]), self.azimuth);
                vec![(i0, 1.0 - w), (i1, w)]
            }
            _ => {
                let polar = alpha[2].clamp(-1.0, 1.0).acos();
                let v = polar / PI * self.polar as f64;
                let j0 = (v.floor() as usize).min(self.polar - 1);
                let wp = v - j0 as f64;
                let (i0, i1, wa) = periodic_cell(alpha[1].atan2(alpha[0]), self.azimuth);
                let na = self.azimuth;
                vec![
                    (j0 * na + i0, (1.0 - wp) * (1.0 - wa)),
                    (j0 * na + i1, (1.0 - wp) * wa),
                    ((j0 + 1) * na + i0, wp * (1.0 - wa)),
                    ((j0 + 1) * na + i1, wp * wa),
                ]
            }
        }
    }

    pub fn interpolate(&self, alpha: &[f64], t: f64) -> f64 {
        let last = self.t_points - 1;
        let u = (t + self.radius) / (2.0 * self.radius) * last as f64;
        let k0 = (u.floor().max(0.0) as usize).min(last - 1);
        let wt = (u - k0 as f64).clamp(0.0, 1.0);
        self.stencil(alpha)
            .into_iter()
            .map(|(d, w)| {
                let row = &self.values[d * self.t_points..(d + 1) * self.t_points];
                w * ((1.0 - wt) * row[k0] + wt * row[k0 + 1])
            })
            .sum()
    }
}

fn periodic_cell(angle: f64, count: usize) -> (usize, usize, f64) {
    let u = angle.rem_euclid(2.0 * PI) / (2.0 * PI) * count as f64;
    let i0 = (u.floor() as usize) % count;
    (i0, (i0 + 1) % count, u - u.floor())
}

/// Per-direction radial samples: `(r, weight·|f̂(rα)|, θ(rα))`.
struct RadialProfile {
    r: Vec<f64>,
    mass: Vec<f64>,
    theta: Vec<f64>,
}

impl RadialProfile {
    fn new(target: &SmoothTarget, radial: &CompositeRule, alpha: &[f64]) -> Self {
        let n = alpha.len();
        let len = radial.nodes.len();
        let mut r = Vec::with_capacity(len);
        let mut mass = Vec::with_capacity(len);
        let mut theta = Vec::with_capacity(len);
        let mut omega = vec![0.0; n];
        for (&ri, &wi) in radial.nodes.iter().zip(&radial.weights) {
            for (o, a) in omega.iter_mut().zip(alpha) {
                *o = ri * a;
            }
            let (m, th) = target.spectrum_polar(&omega);
            r.push(ri);
            mass.push(wi * m);
            theta.push(th);
        }
        Self { r, mass, theta }
    }

    /// `Σ wₖ|f̂ₖ| rₖ^{p}`.
    fn moment(&self, p: i32) -> f64 {
        self.r
            .iter()
            .zip(&self.mass)
            .map(|(&r, &m)| m * r.powi(p))
            .sum()
    }

    /// `h(α,t)q(α)` from this direction's nodes.
    fn hq(&self, n: usize, t: f64) -> f64 {
        let p = n as i32 + 1;
        -FOUR_PI2
            * self
                .r
                .iter()
                .zip(&self.mass)
                .zip(&self.theta)
                .map(|((&r, &m), &th)| m * r.powi(p) * (2.0 * PI * (r * t + th)).cos())
                .sum::<f64>()
    }

    /// Contributions to `a` (coefficient of `α`) and `b` from this direction.
    fn affine(&self, n: usize, radius: f64) -> (f64, f64) {
        let mut a = 0.0;
        let mut b = 0.0;
        for ((&r, &m), &th) in self.r.iter().zip(&self.mass).zip(&self.theta) {
            let phase = 2.0 * PI * (th - r * radius);
            let (s, c) = phase.sin_cos();
            let rn = r.powi(n as i32);
            a -= 2.0 * PI * rn * m * s;
            b += -2.0 * PI * radius * rn * m * s + r.powi(n as i32 - 1) * m * c;
        }
        (a, b)
    }

    /// `∫_{−R}^{y} h(α,t)q(α)(y − t) dt`, exact in `t` for each radial node.
    fn ridge_integral(&self, n: usize, radius: f64, y: f64) -> f64 {
        let len = y + radius;
        if len <= 0.0 {
            return 0.0;
        }
        let p = n as i32 + 1;
        let sum: f64 = self
            .r
            .iter()
            .zip(&self.mass)
            .zip(&self.theta)
            .map(|((&r, &m), &th)| {
                let (jr, ji) = ramp_transform(2.0 * PI * r, len);
                let (s, c) = (2.0 * PI * (th - r * radius)).sin_cos();
                m * r.powi(p) * (c * jr - s * ji)
            })
            .sum();
        -FOUR_PI2 * sum
    }
}

/// `∫₀^L e^{iks}(L − s) ds` as `(re, im)`, with series forms where the closed
/// form cancels.
fn ramp_transform(k: f64, len: f64) -> (f64, f64) {
    let x = k * len;
    let l2 = len * len;
    if x.abs() < 0.5 {
        let x2 = x * x;
        let re = l2 * (0.5 - x2 / 24.0 + x2 * x2 / 720.0 - x2 * x2 * x2 / 40320.0 + x2.powi(4) / 3628800.0);
        let im = l2 * x * (1.0 / 6.0 - x2 / 120.0 + x2 * x2 / 5040.0 - x2 * x2 * x2 / 362880.0 + x2.powi(4) / 39916800.0);
        (re, im)
    } else {
        let h = (0.5 * x).sin();
        (2.0 * h * h / (k * k), (x - x.sin()) / (k * k))
    }
}

/// Quadrature rules at one resolution.
struct Rules {
    radial: CompositeRule,
    sphere: SphereRule,
    res: Resolution,
}

impl Rules {
    fn new(n: usize, r_max: f64, res: Resolution) -> Result<Self> {
        Ok(Self {
            radial: CompositeRule::new(0.0, r_max, res.radial_panels, res.order),
            sphere: SphereRule::new(n, res.sphere)?,
            res,
        })
    }
}

/// Spectral integrals computed at one resolution.
#[derive(Debug, Clone)]
struct Moments {
    z: f64,
    l1: f64,
    first: f64,
    a: Vec<f64>,
    b: f64,
}

fn moments(target: &SmoothTarget, radius: f64, rules: &Rules, exec: Execution) -> Moments {
    let n = target.n;
    let per_dir = exec.map_range(rules.sphere.len(), |i| {
        let alpha = &rules.sphere.nodes[i];
        let prof = RadialProfile::new(target, &rules.radial, alpha);
        let (a, b) = prof.affine(n, radius);
        (
            FOUR_PI2 * prof.moment(n as i32 + 1),
            prof.moment(n as i32 - 1),
            2.0 * PI * prof.moment(n as i32),
            a,
            b,
        )
    });
    let mut m = Moments {
        z: 0.0,
        l1: 0.0,
        first: 0.0,
        a: vec![0.0; n],
        b: 0.0,
    };
    for ((z, l1, first, a, b), (alpha, &w)) in per_dir
        .into_iter()
        .zip(rules.sphere.nodes.iter().zip(&rules.sphere.weights))
    {
        m.z += w * z;
        m.l1 += w * l1;
        m.first += w * first;
        m.b += w * b;
        for (ai, &al) in m.a.iter_mut().zip(alpha) {
            *ai += w * a * al;
        }
    }
    m
}

fn reconstruct_with(
    target: &SmoothTarget,
    radius: f64,
    rules: &Rules,
    m: &Moments,
    x: &[f64],
) -> f64 {
    let n = target.n;
    let ridge: f64 = rules
        .sphere
        .nodes
        .iter()
        .zip(&rules.sphere.weights)
        .map(|(alpha, &w)| {
            let prof = RadialProfile::new(target, &rules.radial, alpha);
            w * prof.ridge_integral(n, radius, dot(alpha, x))
        })
        .sum();
    dot(&m.a, x) + m.b + ridge
}

fn probe_points(n: usize, radius: f64) -> Vec<Vec<f64>> {
    let mut pts = vec![vec![0.0; n]];
    let mut e = vec![0.0; n];
    e[0] = radius;
    pts.push(e.clone());
    e[0] = -0.5 * radius;
    pts.push(e);
    if n >= 2 {
        let s = radius / (n as f64).sqrt();
        pts.push(vec![s; n]);
        let mut v = vec![0.0; n];
        v[n - 1] = -0.7 * radius;
        pts.push(v);
    }
    pts
}

/// Smallest cut-off with `4π² ∫_{‖ω‖>r} |f̂| ‖ω‖² dω ≤ budget`.
fn certified_cutoff(target: &SmoothTarget, budget: f64) -> Result<f64> {
    let tail = |r: f64| FOUR_PI2 * target.spectral_tail(r, 2);
    let mut hi = 1.0;
    while tail(hi) > budget {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::numerical(format!(
                "spectral tail exceeds {budget:e} at every radial cut-off up to 1e6"
            )));
        }
    }
    let mut lo = 0.0;
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if tail(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(hi)
}

/// Quadrature realization of the integral representation for one target and
/// ball radius. Immutable after [`build`](Self::build); serializable for
/// reproducibility.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepresentationOracle {
    pub target: SmoothTarget,
    pub radius: f64,
    pub tolerance: f64,
    pub r_max: f64,
    /// Certified bound on the part of `Z` beyond `r_max`.
    pub z_tail_bound: f64,
    pub z_value: f64,
    /// `‖f̂‖₁`.
    pub spectrum_l1: f64,
    /// `∫ |f̂(ω)| ‖2πω‖ dω`.
    pub first_moment: f64,
    pub a: Vec<f64>,
    pub b: f64,
    pub resolution: Resolution,
    /// Largest change of `Z` or of a probe reconstruction in the final
    /// refinement step.
    pub refinement_change: f64,
    pub radial_grid: CompositeRule,
    pub sphere_grid: SphereRule,
    pub lattice: HqLattice,
}

impl RepresentationOracle {
    /// Builds the oracle: certifies `r_max`, refines the quadrature until `Z`
    /// and probe reconstructions settle to `tol / 10`, then tabulates `h·q`
    /// until interpolation matches direct quadrature to `tol`.
    pub fn build(target: &SmoothTarget, radius: f64, opts: OracleOptions) -> Result<Self> {
        let n = target.n;
        if n > 3 {
            return Err(Error::Unsupported(format!(
                "representation oracle for n = {n} (supported: 1, 2, 3)"
            )));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid(format!("radius must be positive, got {radius}")));
        }
        if !(opts.tol.is_finite() && opts.tol > 0.0) {
            return Err(Error::invalid(format!("tolerance must be positive, got {}", opts.tol)));
        }
        let tol = opts.tol;
        let r_max = match opts.r_max {
            Some(r) => {
                if !(r.is_finite() && r > 0.0) {
                    return Err(Error::invalid(format!("r_max must be positive, got {r}")));
                }
                r
            }
            None => certified_cutoff(target, tol / 10.0)?,
        };
        let z_tail_bound = FOUR_PI2 * target.spectral_tail(r_max, 2);
        if z_tail_bound > tol {
            return Err(Error::numerical(format!(
                "spectral tail beyond r_max = {r_max} is bounded only by {z_tail_bound:e} > tol {tol:e}"
            )));
        }

        let probes = probe_points(n, radius);
        let evaluate = |res: Resolution| -> Result<(Rules, Moments, Vec<f64>)> {
            let rules = Rules::new(n, r_max, res)?;
            let m = moments(target, radius, &rules, opts.exec);
            let vals = opts
                .exec
                .map_slice(&probes, |x| reconstruct_with(target, radius, &rules, &m, x));
            Ok((rules, m, vals))
        };

        let mut res = Resolution::INITIAL;
        let (_, mut prev_m, mut prev_v) = evaluate(res)?;
        let mut converged = None;
        for _ in 0..opts.max_refinements {
            res = res.refined();
            let (rules, m, vals) = evaluate(res)?;
            let change = prev_v
                .iter()
                .zip(&vals)
                .map(|(p, v)| (p - v).abs())
                .fold((m.z - prev_m.z).abs(), f64::max);
            if change < tol / 10.0 {
                converged = Some((rules, m, change));
                break;
            }
            prev_m = m;
            prev_v = vals;
        }
        let Some((rules, m, change)) = converged else {
            return Err(Error::numerical(format!(
                "representation quadrature did not settle to {:e} after {} refinements",
                tol / 10.0,
                opts.max_refinements
            )));
        };
        if !(m.z.is_finite() && m.z > 0.0) {
            return Err(Error::numerical(format!("Z = {} is not positive and finite", m.z)));
        }

        let mut oracle = Self {
            target: target.clone(),
            radius,
            tolerance: tol,
            r_max,
            z_tail_bound,
            z_value: m.z,
            spectrum_l1: m.l1,
            first_moment: m.first,
            a: m.a,
            b: m.b,
            resolution: rules.res,
            refinement_change: change,
            radial_grid: rules.radial,
            sphere_grid: rules.sphere,
            lattice: HqLattice {
                dim: n,
                radius,
                polar: 0,
                azimuth: 0,
                t_points: 0,
                values: Vec::new(),
            },
        };
        oracle.lattice = oracle.build_lattice(opts)?;
        Ok(oracle)
    }

    pub fn dim(&self) -> usize {
        self.target.n
    }

    fn build_lattice(&self, opts: OracleOptions) -> Result<HqLattice> {
        let n = self.dim();
        // a priori t-spacing from |∂²ₜ(hq)| ≤ 4π² Σ|wₖ f̂ₖ| rₖ^{n+1} (2πrₖ)²
        let curvature = self
            .sphere_grid
            .nodes
            .iter()
            .map(|alpha| {
                let prof = RadialProfile::new(&self.target, &self.radial_grid, alpha);
                FOUR_PI2 * FOUR_PI2 * prof.moment(n as i32 + 3)
            })
            .fold(0.0, f64::max);
        let dt = (8.0 * self.tolerance / curvature.max(1e-300)).sqrt();
        let mut t_points = ((2.0 * self.radius / dt).ceil() as usize + 1).clamp(17, 1 << 16);
        let (mut polar, mut azimuth) = match n {
            1 => (0, 0),
            2 => (0, 16),
            _ => (8, 16),
        };
        let target_err = LATTICE_TOL_FACTOR * self.tolerance;
        let mut rng = ChaCha8Rng::seed_from_u64(0x1a77);
        for _ in 0..=2 * opts.max_refinements {
            let lattice = self.tabulate(polar, azimuth, t_points, opts.exec);
            let err = self.lattice_error(&lattice, 100, 0x5eed, opts.exec);
            if err < target_err {
                return Ok(lattice);
            }
            // split the error by axis: t exact on lattice nodes, or α on lattice directions
            let dirs = HqLattice::directions(n, polar, azimuth);
            let (on_dirs, on_nodes): (Vec<_>, Vec<_>) = (0..50)
                .map(|_| {
                    let d = dirs[rng.random_range(0..dirs.len())].clone();
                    let t = rng.random_range(-self.radius..=self.radius);
                    let j = rng.random_range(0..t_points);
                    let tj = -self.radius + 2.0 * self.radius * j as f64 / (t_points - 1) as f64;
                    ((d, t), (random_unit(&mut rng, n), tj))
                })
                .unzip();
            let t_err = self.lattice_error_at(&lattice, &on_dirs, opts.exec);
            let angle_err = if n == 1 {
                0.0
            } else {
                self.lattice_error_at(&lattice, &on_nodes, opts.exec)
            };
            let refine_t = t_err >= 0.4 * target_err || angle_err < 0.4 * target_err;
            let refine_angle = n > 1 && (angle_err >= 0.4 * target_err || t_err < 0.4 * target_err);
            if refine_t {
                t_points = 2 * t_points - 1;
            }
            if refine_angle {
                polar *= 2;
                azimuth *= 2;
            }
        }
        Err(Error::numerical(format!(
            "h·q lattice interpolation did not reach {target_err:e}"
        )))
    }

    fn tabulate(&self, polar: usize, azimuth: usize, t_points: usize, exec: Execution) -> HqLattice {
        let n = self.dim();
        let dirs = HqLattice::directions(n, polar, azimuth);
        let r = self.radius;
        let dt = 2.0 * r / (t_points - 1) as f64;
        let p = n as i32 + 1;
        let rows = exec.map_slice(&dirs, |alpha| {
            let prof = RadialProfile::new(&self.target, &self.radial_grid, alpha);
            let mut row = vec![0.0; t_points];
            for ((&rk, &mk), &th) in prof.r.iter().zip(&prof.mass).zip(&prof.theta) {
                let coef = -FOUR_PI2 * mk * rk.powi(p);
                let (ss, sc) = (2.0 * PI * rk * dt).sin_cos();
                let (mut zs, mut zc) = (0.0, 0.0);
                for (j, v) in row.iter_mut().enumerate() {
                    // phase rotation, re-anchored periodically against drift
                    if j % 64 == 0 {
                        let t = -r + dt * j as f64;
                        (zs, zc) = (2.0 * PI * (rk * t + th)).sin_cos();
                    } else {
                        (zs, zc) = (zs * sc + zc * ss, zc * sc - zs * ss);
                    }
                    *v += coef * zc;
                }
            }
            row
        });
        HqLattice {
            dim: n,
            radius: r,
            polar,
            azimuth,
            t_points,
            values: rows.concat(),
        }
    }

    fn lattice_error_at(&self, lattice: &HqLattice, pts: &[(Vec<f64>, f64)], exec: Execution) -> f64 {
        let n = self.dim();
        exec.max_range(pts.len(), |i| {
            let (alpha, t) = &pts[i];
            let direct = RadialProfile::new(&self.target, &self.radial_grid, alpha).hq(n, *t);
            (lattice.interpolate(alpha, *t) - direct).abs()
        })
    }

    /// Max `|interpolated − direct|` of `h·q` over `count` random `(α, t)`.
    pub fn lattice_error(&self, lattice: &HqLattice, count: usize, seed: u64, exec: Execution) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pts: Vec<(Vec<f64>, f64)> = (0..count)
            .map(|_| {
                let alpha = random_unit(&mut rng, self.dim());
                let t = rng.random_range(-self.radius..=self.radius);
                (alpha, t)
            })
            .collect();
        self.lattice_error_at(lattice, &pts, exec)
    }

    /// `Z = ∫ |f̂(ω)| ‖2πω‖² dω`.
    pub fn z(&self) -> f64 {
        self.z_value
    }

    /// `p(ω) = |f̂(ω)| ‖2πω‖² / Z`.
    pub fn density_p(&self, omega: &[f64]) -> f64 {
        self.target.spectrum_magnitude(omega) * FOUR_PI2 * dot(omega, omega) / self.z_value
    }

    /// `q(α) = ∫₀^∞ p(rα) r^{n-1} dr`. Exactly `1/2` in one dimension, where
    /// real-valuedness makes `|f̂|` even.
    pub fn sphere_density_q(&self, alpha: &[f64]) -> Result<f64> {
        self.check_direction(alpha)?;
        if self.dim() == 1 {
            return Ok(0.5);
        }
        let prof = RadialProfile::new(&self.target, &self.radial_grid, alpha);
        Ok(FOUR_PI2 * prof.moment(self.dim() as i32 + 1) / self.z_value)
    }

    /// `ψ(t, ω)` (`order` 0) and its first two `t`-derivatives.
    pub fn psi(&self, t: f64, omega: &[f64], order: u8) -> Result<f64> {
        psi(self.z_value, &self.target, t, omega, order)
    }

    /// Residual of the one-dimensional ReLU identity for `ψ(·, ω)` at `y`,
    /// with the integral taken by composite Gauss–Legendre on `10⁴` nodes.
    pub fn scalar_identity_check(&self, omega: &[f64], radius: f64, y: f64) -> Result<f64> {
        scalar_identity_residual(self.z_value, &self.target, omega, radius, y)
    }

    /// `h(α,t)` and `h(α,t)q(α)` by direct radial quadrature.
    pub fn kernel_h(&self, alpha: &[f64], t: f64) -> Result<KernelValue> {
        self.check_direction(alpha)?;
        self.check_bias(t)?;
        let prof = RadialProfile::new(&self.target, &self.radial_grid, alpha);
        let hq = prof.hq(self.dim(), t);
        let q = self.sphere_density_q(alpha)?;
        if q < Q_FLOOR {
            return Ok(KernelValue { h: None, hq: 0.0 });
        }
        Ok(KernelValue { h: Some(hq / q), hq })
    }

    /// `h(α,t)q(α)` interpolated from the cached lattice.
    pub fn kernel_hq(&self, alpha: &[f64], t: f64) -> Result<f64> {
        self.check_direction(alpha)?;
        self.check_bias(t)?;
        Ok(self.lattice.interpolate(alpha, t))
    }

    /// `(a, b)`.
    pub fn affine_terms(&self) -> (&[f64], f64) {
        (&self.a, self.b)
    }

    /// Evaluates the representation at `x` by nested quadrature.
    pub fn reconstruct(&self, x: &[f64]) -> Result<f64> {
        self.reconstruct_at(x, self.resolution)
    }

    /// Same as [`reconstruct`](Self::reconstruct) with explicit step sizes
    /// (the radial cut-off stays fixed).
    pub fn reconstruct_at(&self, x: &[f64], res: Resolution) -> Result<f64> {
        self.check_point(x)?;
        if res == self.resolution {
            let rules = Rules {
                radial: self.radial_grid.clone(),
                sphere: self.sphere_grid.clone(),
                res,
            };
            let m = self.stored_moments();
            return Ok(reconstruct_with(&self.target, self.radius, &rules, &m, x));
        }
        let rules = Rules::new(self.dim(), self.r_max, res)?;
        let m = moments(&self.target, self.radius, &rules, Execution::Sequential);
        Ok(reconstruct_with(&self.target, self.radius, &rules, &m, x))
    }

    /// Reconstructs at many points, in parallel where enabled.
    pub fn reconstruct_many(&self, xs: &[Vec<f64>], res: Resolution, exec: Execution) -> Result<Vec<f64>> {
        for x in xs {
            self.check_point(x)?;
        }
        let rules = if res == self.resolution {
            Rules {
                radial: self.radial_grid.clone(),
                sphere: self.sphere_grid.clone(),
                res,
            }
        } else {
            Rules::new(self.dim(), self.r_max, res)?
        };
        let m = if res == self.resolution {
            self.stored_moments()
        } else {
            moments(&self.target, self.radius, &rules, exec)
        };
        Ok(exec.map_slice(xs, |x| reconstruct_with(&self.target, self.radius, &rules, &m, x)))
    }

    /// `reconstruct(x) − aᵀx − b`: the ridge-integral part alone.
    pub fn ridge_part(&self, x: &[f64]) -> Result<f64> {
        Ok(self.reconstruct(x)? - dot(&self.a, x) - self.b)
    }

    fn stored_moments(&self) -> Moments {
        Moments {
            z: self.z_value,
            l1: self.spectrum_l1,
            first: self.first_moment,
            a: self.a.clone(),
            b: self.b,
        }
    }

    fn check_direction(&self, alpha: &[f64]) -> Result<()> {
        if alpha.len() != self.dim() {
            return Err(Error::invalid(format!(
                "direction has length {}, expected {}",
                alpha.len(),
                self.dim()
            )));
        }
        if (norm(alpha) - 1.0).abs() > UNIT_TOL {
            return Err(Error::invalid(format!("direction is not a unit vector (norm {})", norm(alpha))));
        }
        Ok(())
    }

    fn check_bias(&self, t: f64) -> Result<()> {
        if t.abs() > self.radius * (1.0 + 1e-12) {
            return Err(Error::invalid(format!("bias {t} outside [−{r}, {r}]", r = self.radius)));
        }
        Ok(())
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.dim() {
            return Err(Error::invalid(format!("point has length {}, expected {}", x.len(), self.dim())));
        }
        if norm(x) > self.radius * (1.0 + 1e-12) {
            return Err(Error::invalid(format!(
                "point with norm {} lies outside the ball of radius {}",
                norm(x),
                self.radius
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Derivative `order` (0, 1 or 2) in `t` of
/// `ψ(t, ω) = Z / ‖2πω‖² · cos(2π(‖ω‖t + θ(ω)))`.
pub fn psi(z: f64, target: &SmoothTarget, t: f64, omega: &[f64], order: u8) -> Result<f64> {
    let r = norm(omega);
    if r == 0.0 {
        return Err(Error::invalid("ψ is singular at ω = 0"));
    }
    let phase = 2.0 * PI * (r * t + target.spectrum_phase(omega));
    let two_pi_r = 2.0 * PI * r;
    match order {
        0 => Ok(z / (two_pi_r * two_pi_r) * phase.cos()),
        1 => Ok(-z / two_pi_r * phase.sin()),
        2 => Ok(-z * phase.cos()),
        _ => Err(Error::invalid(format!("ψ derivative order {order} not in 0..=2"))),
    }
}

/// `ψ(y) − [∫_{−R}^{R} ψ''(t) σ(y − t) dt + ψ'(−R)(y + R) + ψ(−R)]`.
pub fn scalar_identity_residual(
    z: f64,
    target: &SmoothTarget,
    omega: &[f64],
    radius: f64,
    y: f64,
) -> Result<f64> {
    if y.abs() > radius {
        return Err(Error::invalid(format!("y = {y} outside [−{radius}, {radius}]")));
    }
    let d2 = |t: f64| psi(z, target, t, omega, 2).expect("ω checked nonzero");
    let lhs = psi(z, target, y, omega, 0)?;
    // σ(y − t) vanishes for t > y
    let order = 10;
    let panels = (((y + radius) / (2.0 * radius)) * 1000.0).ceil() as usize;
    let integral = if panels == 0 {
        0.0
    } else {
        crate::quad::composite(-radius, y, panels, order, |t| d2(t) * relu(y - t))
    };
    let rhs = integral
        + psi(z, target, -radius, omega, 1)? * (y + radius)
        + psi(z, target, -radius, omega, 0)?;
    Ok(lhs - rhs)
}

/// Uniform direction on `S^{n-1}` by normalizing a standard normal vector.
pub(crate) fn random_unit<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    use rand_distr::StandardNormal;
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let len = norm(&v);
        if len > 0.0 && len.is_finite() {
            return v.into_iter().map(|x| x / len).collect();
        }
    }
}
