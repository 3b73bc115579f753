//! Per-command configuration: JSON file, defaults for absent keys, then
//! command-line overrides.

use std::fs;

use randrelu::analysis::FitMode;
use randrelu::mrac::scenario::MracScenario;
use randrelu::targets::TargetSpec;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::{CliError, Common};

fn gaussian() -> TargetSpec {
    TargetSpec::Gaussian {
        k: None,
        weight: 1.0,
        width: 1.0,
        center: None,
    }
}
fn one() -> usize {
    1
}
fn unit() -> f64 {
    1.0
}
fn nu_default() -> f64 {
    0.1
}

/// Reads `--config` into `T`, or `T::default()` when absent.
pub fn load<T: DeserializeOwned + Default>(c: &Common) -> Result<T, CliError> {
    match &c.config {
        None => Ok(T::default()),
        Some(path) => {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::Validation(format!("cannot read {}: {e}", path.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
        }
    }
}

/// Rejects a flag the command has no use for.
fn unused(name: &str, present: bool, command: &str) -> Result<(), CliError> {
    if present {
        return Err(CliError::Validation(format!("--{name} does not apply to `{command}`")));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RepcheckConfig {
    #[serde(default = "gaussian")]
    pub target: TargetSpec,
    #[serde(default = "one")]
    pub n: usize,
    #[serde(default = "unit", rename = "R")]
    pub radius: f64,
    #[serde(default = "repcheck_tol")]
    pub tol: f64,
    /// Forces the radial cut-off instead of certifying it.
    #[serde(default)]
    pub r_max: Option<f64>,
    /// Points per axis of the reconstruction grid; defaults 101 / 41 / 15 for n = 1 / 2 / 3.
    #[serde(default)]
    pub grid_density: Option<usize>,
    #[serde(default = "identity_samples")]
    pub identity_samples: usize,
    #[serde(default)]
    pub seed: u64,
}

fn repcheck_tol() -> f64 {
    1e-3
}
fn identity_samples() -> usize {
    50
}

impl Default for RepcheckConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl RepcheckConfig {
    pub fn resolve(c: &Common) -> Result<Self, CliError> {
        let mut cfg: Self = load(c)?;
        unused("nu", c.nu.is_some(), "repcheck")?;
        if let Some(s) = c.seed {
            cfg.seed = s;
        }
        if let Some(t) = c.tol {
            cfg.tol = t;
        }
        let g = cfg.grid_density.get_or_insert(match cfg.n {
            1 => 101,
            2 => 41,
            _ => 15,
        });
        if *g < 2 || cfg.identity_samples == 0 {
            return Err(CliError::Validation("grid_density ≥ 2 and identity_samples ≥ 1 required".into()));
        }
        Ok(cfg)
    }
}

/// Shared by `approx` and `fit`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default = "gaussian")]
    pub target: TargetSpec,
    #[serde(default = "one")]
    pub n: usize,
    #[serde(default = "unit", rename = "R")]
    pub radius: f64,
    #[serde(default = "m_default")]
    pub m: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "nu_default")]
    pub nu: f64,
    /// Oracle tolerance (`approx` only).
    #[serde(default = "study_tol")]
    pub tol: f64,
    /// Ridge override (`fit` only).
    #[serde(default)]
    pub ridge: Option<f64>,
    /// Points per axis of the certification grid; defaults per dimension.
    #[serde(default)]
    pub grid_density: Option<usize>,
}

fn m_default() -> usize {
    100
}
fn study_tol() -> f64 {
    1e-4
}

impl Default for NetworkConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl NetworkConfig {
    pub fn resolve(c: &Common, command: &str) -> Result<Self, CliError> {
        let mut cfg: Self = load(c)?;
        if let Some(s) = c.seed {
            cfg.seed = s;
        }
        if let Some(nu) = c.nu {
            cfg.nu = nu;
        }
        if command == "fit" {
            unused("tol", c.tol.is_some(), command)?;
        } else if let Some(t) = c.tol {
            cfg.tol = t;
        }
        if command == "approx" && cfg.ridge.is_some() {
            return Err(CliError::Validation("ridge does not apply to `approx`".into()));
        }
        cfg.grid_density.get_or_insert(randrelu::analysis::default_grid_density(cfg.n));
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingConfig {
    #[serde(default = "gaussian")]
    pub target: TargetSpec,
    #[serde(default = "one")]
    pub n: usize,
    #[serde(default = "unit", rename = "R")]
    pub radius: f64,
    #[serde(default = "study_tol")]
    pub tol: f64,
    #[serde(default = "m_list")]
    pub m_list: Vec<usize>,
    #[serde(default = "seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "modes")]
    pub modes: Vec<FitMode>,
    #[serde(default = "nu_default")]
    pub nu: f64,
    #[serde(default)]
    pub grid_density: Option<usize>,
    /// Wall-clock timing per cell; breaks byte-reproducibility when on.
    #[serde(default)]
    pub record_runtime: bool,
}

fn m_list() -> Vec<usize> {
    vec![25, 50, 100, 200, 400, 800]
}
fn seeds() -> Vec<u64> {
    (0..20).collect()
}
fn modes() -> Vec<FitMode> {
    vec![FitMode::Importance, FitMode::LeastSquares]
}

impl Default for ScalingConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl ScalingConfig {
    pub fn resolve(c: &Common) -> Result<Self, CliError> {
        let mut cfg: Self = load(c)?;
        // --seed shifts the whole seed list to start at N
        if let Some(s) = c.seed {
            let len = cfg.seeds.len() as u64;
            cfg.seeds = (s..s + len).collect();
        }
        if let Some(t) = c.tol {
            cfg.tol = t;
        }
        if let Some(nu) = c.nu {
            cfg.nu = nu;
        }
        if cfg.modes.is_empty() {
            return Err(CliError::Validation("modes must not be empty".into()));
        }
        cfg.grid_density.get_or_insert(randrelu::analysis::default_grid_density(cfg.n));
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    #[serde(default = "one")]
    pub n: usize,
    #[serde(default = "unit", rename = "R")]
    pub radius: f64,
    #[serde(default = "unit")]
    pub rho: f64,
    /// Defaults to the uniform law's density floor.
    #[serde(default)]
    pub p_min: Option<f64>,
    #[serde(default = "m_default")]
    pub m: usize,
    #[serde(default = "nu_default")]
    pub nu: f64,
    #[serde(default = "one")]
    pub ell: usize,
    #[serde(default = "nu_default")]
    pub eps0: f64,
    /// Point for the pointwise bounding function; defaults to the origin.
    #[serde(default)]
    pub x: Option<Vec<f64>>,
    /// Lyapunov pair for the tracking bound (row-major).
    #[serde(default)]
    pub p: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub q: Option<Vec<Vec<f64>>>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields have defaults")
    }
}

impl BoundsConfig {
    pub fn resolve(c: &Common) -> Result<Self, CliError> {
        let mut cfg: Self = load(c)?;
        unused("seed", c.seed.is_some(), "bounds")?;
        unused("tol", c.tol.is_some(), "bounds")?;
        if let Some(nu) = c.nu {
            cfg.nu = nu;
        }
        if cfg.p.is_some() != cfg.q.is_some() {
            return Err(CliError::Validation("p and q must be given together".into()));
        }
        Ok(cfg)
    }
}

/// The scenario itself; the default is the scalar testbed.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MracConfig(pub MracScenario);

impl Default for MracConfig {
    fn default() -> Self {
        Self(MracScenario::scalar_testbed())
    }
}

impl MracConfig {
    pub fn resolve(c: &Common) -> Result<Self, CliError> {
        let mut cfg: Self = load(c)?;
        unused("tol", c.tol.is_some(), "mrac")?;
        unused("nu", c.nu.is_some(), "mrac")?;
        if let Some(s) = c.seed {
            cfg.0.seed = s;
        }
        Ok(cfg)
    }
}
