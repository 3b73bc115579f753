use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use randrelu::analysis::{
    ball_grid, coefficient_boxes, corollary1_bound, corollary1_constants, importance_constants, scaling_study,
    sup_error, theorem1_bound, theorem1_constants, BoundConstants, CoefficientBoxes, ErrorBoundInputs,
    ImportanceConstants, MedianPoint, StudyOptions, SupError, UniformBoundConstants,
};
use randrelu::fitting::{least_squares_fit, FitProblem, FitReport};
use randrelu::mrac::scenario::run_scenario;
use randrelu::mrac::{epsilon_max, required_neurons, tracking_ultimate_bound};
use randrelu::network::build_importance_network;
use randrelu::representation::{OracleOptions, Resolution, LATTICE_TOL_FACTOR};
use randrelu::{Execution, HiddenParamDistribution, ParamDensity, RepresentationOracle, ReluNetwork, SmoothTarget};

use crate::config::{BoundsConfig, MracConfig, NetworkConfig, RepcheckConfig, ScalingConfig};
use crate::output::{float, Csv, Sink};
use crate::{CliError, Common};

/// Residual threshold for the one-dimensional ReLU identity.
const IDENTITY_TOL: f64 = 1e-6;

#[derive(Serialize)]
struct Check {
    value: f64,
    threshold: f64,
    pass: bool,
}

impl Check {
    fn at_most(value: f64, threshold: f64) -> Self {
        Self {
            value,
            threshold,
            pass: value <= threshold,
        }
    }
}

#[derive(Serialize)]
struct OracleSummary {
    r_max: f64,
    z: f64,
    a: Vec<f64>,
    b: f64,
    resolution: Resolution,
    refinement_change: f64,
    lattice_t_points: usize,
    lattice_directions: usize,
}

#[derive(Serialize)]
struct RepcheckReport {
    pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    oracle: Option<OracleSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    grid_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    reconstruction: Option<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    scalar_identity: Option<Check>,
    /// `|∫ q dμ − 1|`.
    #[serde(skip_serializing_if = "Option::is_none")]
    sphere_normalization: Option<Check>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lattice: Option<Check>,
}

pub fn repcheck(c: &Common) -> Result<(), CliError> {
    let cfg = RepcheckConfig::resolve(c)?;
    let target = cfg.target.build(cfg.n)?;
    let sink = Sink::create(&c.out, "repcheck", &[cfg.seed], &cfg)?;
    let exec = Execution::default();
    let opts = OracleOptions {
        r_max: cfg.r_max,
        exec,
        ..OracleOptions::with_tol(cfg.tol)
    };
    let oracle = match RepresentationOracle::build(&target, cfg.radius, opts) {
        Ok(o) => o,
        Err(e) if !e.is_validation() => {
            let msg = e.to_string();
            sink.json(
                "repcheck.json",
                &RepcheckReport {
                    pass: false,
                    error: Some(msg.clone()),
                    oracle: None,
                    grid_points: None,
                    reconstruction: None,
                    scalar_identity: None,
                    sphere_normalization: None,
                    lattice: None,
                },
            )?;
            return Err(CliError::Numerical(msg));
        }
        Err(e) => return Err(e.into()),
    };

    let grid = ball_grid(cfg.n, cfg.radius, cfg.grid_density.unwrap_or(101))?;
    let values = oracle.reconstruct_many(&grid, oracle.resolution, exec)?;
    let recon = grid
        .iter()
        .zip(&values)
        .map(|(x, v)| (v - target.value(x)).abs())
        .fold(0.0, f64::max);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut identity: f64 = 0.0;
    for _ in 0..cfg.identity_samples {
        let r = rng.random_range(0.2..3.0);
        let omega: Vec<f64> = random_direction(&mut rng, cfg.n).iter().map(|a| r * a).collect();
        let radius = rng.random_range(0.5..2.0);
        let y = rng.random_range(-radius..=radius);
        identity = identity.max(oracle.scalar_identity_check(&omega, radius, y)?.abs());
    }

    let sphere = &oracle.sphere_grid;
    let mut q_integral = 0.0;
    for (alpha, w) in sphere.nodes.iter().zip(&sphere.weights) {
        q_integral += w * oracle.sphere_density_q(alpha)?;
    }
    let lattice = oracle.lattice_error(&oracle.lattice, 100, cfg.seed, exec);

    let report = RepcheckReport {
        pass: false,
        error: None,
        oracle: Some(OracleSummary {
            r_max: oracle.r_max,
            z: oracle.z(),
            a: oracle.a.clone(),
            b: oracle.b,
            resolution: oracle.resolution,
            refinement_change: oracle.refinement_change,
            lattice_t_points: oracle.lattice.t_points,
            lattice_directions: oracle.lattice.values.len() / oracle.lattice.t_points.max(1),
        }),
        grid_points: Some(grid.len()),
        reconstruction: Some(Check::at_most(recon, cfg.tol)),
        scalar_identity: Some(Check {
            value: identity,
            threshold: IDENTITY_TOL,
            pass: identity < IDENTITY_TOL,
        }),
        sphere_normalization: Some(Check::at_most((q_integral - 1.0).abs(), cfg.tol)),
        lattice: Some(Check::at_most(lattice, LATTICE_TOL_FACTOR * cfg.tol)),
    };
    let pass = [
        &report.reconstruction,
        &report.scalar_identity,
        &report.sphere_normalization,
        &report.lattice,
    ]
    .iter()
    .all(|c| c.as_ref().is_some_and(|c| c.pass));
    sink.json("repcheck.json", &RepcheckReport { pass, ..report })?;
    if pass {
        Ok(())
    } else {
        Err(CliError::CheckFailed("representation checks failed; see repcheck.json".into()))
    }
}

fn random_direction(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![if rng.random::<bool>() { 1.0 } else { -1.0 }];
    }
    loop {
        // Marsaglia-style rejection from the cube
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let r = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if r > 1e-3 && r <= 1.0 {
            return v.iter().map(|a| a / r).collect();
        }
    }
}

fn bound_inputs(n: usize, radius: f64, target: &SmoothTarget, p_min: f64, m: usize, nu: f64) -> ErrorBoundInputs {
    ErrorBoundInputs {
        n,
        radius,
        rho: target.rho,
        p_min,
        m,
        nu,
    }
}

#[derive(Serialize)]
struct NetworkReport<'a> {
    mode: &'static str,
    n: usize,
    #[serde(rename = "R")]
    radius: f64,
    m: usize,
    seed: u64,
    rho: f64,
    sup_error: SupError,
    theorem1_bound: f64,
    within_theorem1_bound: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    coefficient_boxes: Option<CoefficientBoxes>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fit: Option<&'a FitReport>,
}

fn write_network(
    sink: &Sink,
    cfg: &NetworkConfig,
    mode: &'static str,
    target: &SmoothTarget,
    net: &ReluNetwork,
    p_min: f64,
    fit: Option<&FitReport>,
) -> Result<(), CliError> {
    let sup = sup_error(net, target, cfg.radius, cfg.grid_density.unwrap_or(101))?;
    let bound = theorem1_bound(&bound_inputs(cfg.n, cfg.radius, target, p_min, cfg.m, cfg.nu))?;
    let boxes = if fit.is_none() {
        Some(coefficient_boxes(net, target.rho, p_min)?)
    } else {
        None
    };
    sink.json(&format!("{mode}_network.json"), net)?;
    sink.json(
        &format!("{mode}.json"),
        &NetworkReport {
            mode,
            n: cfg.n,
            radius: cfg.radius,
            m: cfg.m,
            seed: cfg.seed,
            rho: target.rho,
            sup_error: sup,
            theorem1_bound: bound,
            within_theorem1_bound: sup.certified_bound <= bound,
            coefficient_boxes: boxes,
            fit,
        },
    )?;
    Ok(())
}

pub fn approx(c: &Common) -> Result<(), CliError> {
    let cfg = NetworkConfig::resolve(c, "approx")?;
    let target = cfg.target.build(cfg.n)?;
    let sink = Sink::create(&c.out, "approx", &[cfg.seed], &cfg)?;
    let oracle = RepresentationOracle::build(&target, cfg.radius, OracleOptions::with_tol(cfg.tol))?;
    let dist = HiddenParamDistribution::uniform(cfg.n, cfg.radius)?;
    let net = build_importance_network(&oracle, &dist, cfg.m, cfg.seed)?;
    write_network(&sink, &cfg, "approx", &target, &net, dist.p_min(), None)
}

pub fn fit(c: &Common) -> Result<(), CliError> {
    let cfg = NetworkConfig::resolve(c, "fit")?;
    let target = cfg.target.build(cfg.n)?;
    let sink = Sink::create(&c.out, "fit", &[cfg.seed], &cfg)?;
    let dist = HiddenParamDistribution::uniform(cfg.n, cfg.radius)?;
    let params = dist.sample_hidden_params(cfg.m, cfg.seed);
    let mut problem = FitProblem::from_function(cfg.n, cfg.radius, params, |x| target.value(x))?;
    if let Some(r) = cfg.ridge {
        problem.ridge = r;
    }
    let out = least_squares_fit(&problem)?;
    write_network(&sink, &cfg, "fit", &target, &out.network, dist.p_min(), Some(&out.report))
}

#[derive(Serialize)]
struct ModeSummary {
    mode: &'static str,
    slope: f64,
    medians: Vec<MedianPoint>,
    /// Cells whose certified error exceeds the high-probability bound.
    theorem1_violations: usize,
    /// Largest certified error over bound ratio.
    max_bound_ratio: f64,
    /// Cells whose coefficients leave the boxes (importance mode only).
    #[serde(skip_serializing_if = "Option::is_none")]
    coefficient_box_violations: Option<usize>,
}

#[derive(Serialize)]
struct ScalingSummary {
    rows: usize,
    modes: Vec<ModeSummary>,
}

pub fn scaling(c: &Common) -> Result<(), CliError> {
    let cfg = ScalingConfig::resolve(c)?;
    let target = cfg.target.build(cfg.n)?;
    let sink = Sink::create(&c.out, "scaling", &cfg.seeds, &cfg)?;
    let exec = Execution::default();
    let oracle = RepresentationOracle::build(
        &target,
        cfg.radius,
        OracleOptions {
            exec,
            ..OracleOptions::with_tol(cfg.tol)
        },
    )?;
    let dist = HiddenParamDistribution::uniform(cfg.n, cfg.radius)?;
    let opts = StudyOptions {
        grid_density: cfg.grid_density.unwrap_or(101),
        nu: cfg.nu,
        exec,
        record_runtime: cfg.record_runtime,
    };
    let mut csv = Csv::new(["m", "seed", "mode", "sup_error", "certified_bound", "theorem1_bound", "runtime_ms"]);
    let mut modes = Vec::new();
    for &mode in &cfg.modes {
        let study = scaling_study(&oracle, &dist, &cfg.m_list, &cfg.seeds, mode, opts)?;
        for cell in &study.cells {
            csv.push(vec![
                cell.m.to_string(),
                cell.seed.to_string(),
                mode.as_str().to_string(),
                float(cell.sup_error),
                float(cell.certified_bound),
                float(cell.theorem1_bound),
                float(cell.runtime_ms),
            ]);
        }
        let box_violations = match mode {
            randrelu::analysis::FitMode::Importance => {
                let mut v = 0;
                for &m in &cfg.m_list {
                    for &s in &cfg.seeds {
                        let net = build_importance_network(&oracle, &dist, m, s)?;
                        v += coefficient_boxes(&net, target.rho, dist.p_min())?.violations;
                    }
                }
                Some(v)
            }
            randrelu::analysis::FitMode::LeastSquares => None,
        };
        modes.push(ModeSummary {
            mode: mode.as_str(),
            slope: study.slope,
            medians: study.medians.clone(),
            theorem1_violations: study
                .cells
                .iter()
                .filter(|c| c.certified_bound > c.theorem1_bound)
                .count(),
            max_bound_ratio: study
                .cells
                .iter()
                .map(|c| c.certified_bound / c.theorem1_bound)
                .fold(0.0, f64::max),
            coefficient_box_violations: box_violations,
        });
    }
    sink.csv("scaling.csv", &csv)?;
    sink.json(
        "scaling_summary.json",
        &ScalingSummary {
            rows: csv.len(),
            modes,
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct TrackingBound {
    p_norm: f64,
    q_inv_norm: f64,
    eps0: f64,
    bound: f64,
}

#[derive(Serialize)]
struct BoundsReport {
    inputs: ErrorBoundInputs,
    theorem1: BoundConstants,
    theorem1_bound: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    corollary1: Option<UniformBoundConstants>,
    #[serde(skip_serializing_if = "Option::is_none")]
    corollary1_bound: Option<f64>,
    importance: ImportanceConstants,
    ell: usize,
    eps0: f64,
    required_neurons: u64,
    x: Vec<f64>,
    epsilon_max: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    tracking: Option<TrackingBound>,
}

fn matrix(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>, CliError> {
    let c = rows.first().map_or(0, Vec::len);
    if rows.is_empty() || c == 0 || rows.iter().any(|r| r.len() != c) {
        return Err(CliError::Validation(format!("{name} must be a non-empty rectangular matrix")));
    }
    Ok(DMatrix::from_fn(rows.len(), c, |i, j| rows[i][j]))
}

pub fn bounds(c: &Common) -> Result<(), CliError> {
    let cfg = BoundsConfig::resolve(c)?;
    let sink = Sink::create(&c.out, "bounds", &[], &cfg)?;
    let uniform_p_min = HiddenParamDistribution::uniform(cfg.n, cfg.radius)?.p_min();
    let inputs = ErrorBoundInputs {
        n: cfg.n,
        radius: cfg.radius,
        rho: cfg.rho,
        p_min: cfg.p_min.unwrap_or(uniform_p_min),
        m: cfg.m,
        nu: cfg.nu,
    };
    let k = theorem1_constants(&inputs)?;
    let (corollary1, corollary1_b) = if cfg.p_min.is_none() {
        (
            Some(corollary1_constants(cfg.n, cfg.radius, cfg.rho, cfg.m)?),
            Some(corollary1_bound(&inputs)?),
        )
    } else {
        (None, None)
    };
    let x = cfg.x.clone().unwrap_or_else(|| vec![0.0; cfg.n]);
    let tracking = match (&cfg.p, &cfg.q) {
        (Some(p), Some(q)) => {
            let (p, q) = (matrix("p", p)?, matrix("q", q)?);
            Some(TrackingBound {
                p_norm: p.singular_values().max(),
                q_inv_norm: 1.0 / q.singular_values().min(),
                eps0: cfg.eps0,
                bound: tracking_ultimate_bound(&p, &q, cfg.eps0)?,
            })
        }
        _ => None,
    };
    let report = BoundsReport {
        inputs,
        theorem1: k,
        theorem1_bound: theorem1_bound(&inputs)?,
        corollary1,
        corollary1_bound: corollary1_b,
        importance: importance_constants(cfg.n, cfg.radius, cfg.rho, inputs.p_min)?,
        ell: cfg.ell,
        eps0: cfg.eps0,
        required_neurons: required_neurons(cfg.ell, cfg.eps0, cfg.nu, k.kappa0, k.kappa1)?,
        epsilon_max: epsilon_max(&x, cfg.rho, cfg.n, cfg.ell, cfg.m, cfg.radius, inputs.p_min)?,
        x,
        tracking,
    };
    sink.json("bounds.json", &report)?;
    Ok(())
}

pub fn mrac(c: &Common) -> Result<(), CliError> {
    let cfg = MracConfig::resolve(c)?;
    let sink = Sink::create(&c.out, "mrac", &[cfg.0.seed], &cfg)?;
    let outcome = run_scenario(&cfg.0, Execution::default())?;
    let tr = outcome
        .trajectory
        .as_ref()
        .ok_or_else(|| CliError::Numerical("scenario returned no trajectory".into()))?;
    let (n, ell) = (outcome.n, outcome.ell);
    let mut header = vec!["t".to_string()];
    for prefix in ["x", "x_r", "e"] {
        header.extend((0..n).map(|i| format!("{prefix}{i}")));
    }
    header.extend((0..ell).map(|i| format!("u{i}")));
    header.extend(["k_x_norm", "theta_norm", "k_r_norm"].map(String::from));
    let mut csv = Csv::new(header);
    for i in 0..tr.t.len() {
        let mut row = vec![float(tr.t[i])];
        for v in [&tr.x[i], &tr.x_r[i], &tr.e[i], &tr.u[i]] {
            row.extend(v.iter().map(|&a| float(a)));
        }
        row.extend([tr.k_x_norm[i], tr.theta_norm[i], tr.k_r_norm[i]].map(float));
        csv.push(row);
    }
    sink.csv("mrac_trajectory.csv", &csv)?;
    sink.json("mrac_report.json", &outcome)?;
    Ok(())
}
