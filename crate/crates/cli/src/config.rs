//! Config file loading and the linear-solve problem description.

use std::path::Path;

use besov_sw::besov::Exponent;
use besov_sw::sw::{GridSpec, Preset};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Reads a TOML file, or JSON when the extension is `.json`.
pub fn load<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = std::fs::read_to_string(path).map_err(|e| besov_sw::Error::io(path, e))?;
    let parsed = if path.extension().is_some_and(|e| e == "json") {
        serde_json::from_str(&text).map_err(|e| e.to_string())
    } else {
        toml::from_str(&text).map_err(|e| e.to_string())
    };
    parsed.map_err(|msg| CliError::Config {
        path: path.display().to_string(),
        problems: vec![msg.trim().to_string()],
    })
}

pub fn check(path: &Path, problems: Vec<String>) -> CliResult<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(CliError::Config {
            path: path.display().to_string(),
            problems,
        })
    }
}

/// Advecting velocity of a linear solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum VelocitySpec {
    Constant { value: [f64; 2] },
    /// `(A sin(2 pi x2 / L), 0)`.
    Shear { amplitude: f64 },
    /// Any two-component preset.
    Field { field: Preset },
}

/// Indices for checking the a-priori estimate along the solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateSpec {
    pub s: f64,
    pub p: Exponent,
    pub p1: Exponent,
    pub r: Exponent,
    #[serde(default)]
    pub div_free: bool,
    /// Time exponents of the smoothing form.
    #[serde(default)]
    pub rho: Option<Exponent>,
    #[serde(default)]
    pub rho1: Option<Exponent>,
}

fn default_every() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolveConfig {
    #[serde(default)]
    pub grid: GridSpec,
    pub initial: Preset,
    pub velocity: VelocitySpec,
    #[serde(default)]
    pub nu: f64,
    pub horizon: f64,
    pub dt: f64,
    #[serde(default = "default_every")]
    pub snapshot_every: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub estimate: Option<EstimateSpec>,
}

impl SolveConfig {
    pub fn violations(&self, diffusive: bool) -> Vec<String> {
        let mut bad = Vec::new();
        if let Err(e) = besov_sw::Grid::new(self.grid.n, self.grid.length) {
            bad.push(e.to_string());
        }
        if diffusive && !(self.nu > 0.0) {
            bad.push(format!("tdiff requires nu > 0, got {}", self.nu));
        }
        if !diffusive && self.nu != 0.0 {
            bad.push(format!("transport requires nu = 0, got {}", self.nu));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            bad.push(format!("horizon = {} must be positive", self.horizon));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            bad.push(format!("dt = {} must be positive", self.dt));
        }
        if self.snapshot_every == 0 {
            bad.push("snapshot_every must be at least 1".into());
        }
        if let Some(e) = &self.estimate {
            if diffusive && e.rho.is_none() {
                bad.push("estimate.rho is required for tdiff".into());
            }
            if !diffusive && (e.rho.is_some() || e.rho1.is_some()) {
                bad.push("estimate.rho and estimate.rho1 apply to tdiff only".into());
            }
        }
        bad
    }
}
