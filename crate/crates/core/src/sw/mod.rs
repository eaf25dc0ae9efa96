//! Viscous shallow water system
//!
//! ```text
//! u_t + (u . grad) u - nu lap u - nu (grad h grad u) / (1 + h) + grad h = 0
//! h_t + div((1 + h) u) = 0
//! ```
//!
//! with the successive-approximation scheme, its budgets and diagnostics,
//! a direct solver and long-time runs.

mod budget;
mod global;
mod model;
mod picard;

use std::f64::consts::PI;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::besov::{besov_norm, BesovParams, Exponent};
use crate::calibration::Constants;
use crate::error::{Error, Result};
use crate::grid::{dealias, Field, Grid};
use crate::lab::{trial_rng, RandomFieldSpec};
use crate::partition::{build_partition, DyadicPartition};

pub use budget::{compute_budgets, Condition, IterationBudget};
pub use global::{
    fit_envelope, global_run, uniqueness_probe, Checkpoint, DivergenceReport, GapRun, GlobalReport,
    RegimeExitRecord,
};
pub use model::{direct_solve, integrate_partial, momentum_coupling, DirectRun, SwModel};
pub use picard::{
    fit_ratio, initial_truncation, run_iteration, IterateNorms, IterateRecord, IterationReport,
    IterationRun, GAP_FACTOR, Q_MAX,
};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSpec {
    pub n: usize,
    pub length: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            n: 64,
            length: 8.0 * PI,
        }
    }
}

/// Sign of the height gradient on the right side of the momentum equation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeightSign {
    /// `u_t + ... = -grad h`, the physical system.
    #[default]
    Minus,
    /// `u_t + ... = +grad h`.
    Plus,
}

impl HeightSign {
    pub fn factor(self) -> f64 {
        match self {
            HeightSign::Minus => -1.0,
            HeightSign::Plus => 1.0,
        }
    }
}

/// Named initial data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Preset {
    Zero {},
    /// Spatially constant value; velocity presets use it on both components.
    Constant { value: f64 },
    /// `A cos(k . x)` for heights; the divergence-free `A (-k2, k1) sin(k . x) / |k|`
    /// for velocities. `mode` is in lattice units.
    SingleMode { mode: [i64; 2], amplitude: f64 },
    /// Gaussian random field with envelope `(1 + |k|)^-beta`, scaled either to
    /// an RMS `amplitude` or to a Besov `norm` at the run's indices.
    Random {
        #[serde(default = "default_beta")]
        beta: f64,
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        amplitude: Option<f64>,
        #[serde(default)]
        norm: Option<f64>,
        #[serde(default)]
        k_max: Option<f64>,
    },
    /// A field container (`.bswf`) or its CSV rendering.
    File { path: PathBuf },
}

fn default_beta() -> f64 {
    3.0
}

impl Default for Preset {
    fn default() -> Self {
        Preset::Zero {}
    }
}

fn default_nu() -> f64 {
    0.5
}
fn default_s() -> f64 {
    2.0
}
fn default_two() -> Exponent {
    Exponent::finite(2.0)
}
fn default_horizon() -> f64 {
    1.0
}
fn default_dt() -> f64 {
    0.01
}
fn default_iters() -> usize {
    8
}
fn default_checkpoint() -> usize {
    10
}
fn default_epsilon() -> f64 {
    0.05
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwConfig {
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_nu")]
    pub nu: f64,
    #[serde(default = "default_s")]
    pub s: f64,
    #[serde(default = "default_two")]
    pub p: Exponent,
    #[serde(default = "default_two")]
    pub r: Exponent,
    #[serde(default)]
    pub u0: Preset,
    #[serde(default)]
    pub h0: Preset,
    /// Horizon of direct and global runs.
    #[serde(default = "default_horizon")]
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default = "default_iters")]
    pub n_iters: usize,
    /// Steps between stored states of direct and global runs.
    #[serde(default = "default_checkpoint")]
    pub checkpoint_every: usize,
    /// Smallness bound on `||u0||_{B^s} + ||h0||_{B^s}` for global runs.
    #[serde(default)]
    pub eta: Option<f64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub height_sign: HeightSign,
    /// Seed for random presets that do not carry their own.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub constants: Option<Constants>,
}

impl Default for SwConfig {
    fn default() -> Self {
        SwConfig {
            grid: GridSpec::default(),
            nu: default_nu(),
            s: default_s(),
            p: default_two(),
            r: default_two(),
            u0: Preset::Zero {},
            h0: Preset::Zero {},
            horizon: default_horizon(),
            dt: default_dt(),
            n_iters: default_iters(),
            checkpoint_every: default_checkpoint(),
            eta: None,
            epsilon: default_epsilon(),
            height_sign: HeightSign::Minus,
            seed: 0,
            constants: None,
        }
    }
}

impl SwConfig {
    pub fn params(&self) -> BesovParams {
        BesovParams {
            s: self.s,
            p: self.p,
            r: self.r,
        }
    }

    /// Every violated precondition, or `Ok` when there are none.
    pub fn violations(&self) -> Vec<String> {
        let mut bad = Vec::new();
        if let Err(e) = Grid::new(self.grid.n, self.grid.length) {
            bad.push(e.to_string());
        }
        if !(self.nu > 0.0 && self.nu < 1.0) {
            bad.push(format!("nu = {} must lie in (0, 1)", self.nu));
        }
        if self.p.is_infinite() {
            bad.push("p = inf is not supported in shallow water runs".into());
        }
        let crit = 2.0 * self.p.reciprocal();
        if !(self.s.is_finite() && self.s > crit && self.s > 1.0) {
            bad.push(format!(
                "s = {} must exceed both 1 and the critical index 2/p = {crit}",
                self.s
            ));
        }
        if !(self.epsilon > 0.0 && crit < self.s - self.epsilon) {
            bad.push(format!(
                "epsilon = {} must be positive with 2/p < s - epsilon",
                self.epsilon
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            bad.push(format!("dt = {} must be positive", self.dt));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            bad.push(format!("horizon = {} must be positive", self.horizon));
        }
        if self.n_iters < 2 {
            bad.push(format!("n_iters = {} must be at least 2", self.n_iters));
        }
        if self.checkpoint_every == 0 {
            bad.push("checkpoint_every must be at least 1".into());
        }
        if let Some(eta) = self.eta {
            if !(eta > 0.0) {
                bad.push(format!("eta = {eta} must be positive"));
            }
        }
        if let Some(c) = &self.constants {
            if let Err(e) = c.validate() {
                bad.push(e.to_string());
            }
        }
        for (name, preset) in [("u0", &self.u0), ("h0", &self.h0)] {
            if let Preset::Random {
                amplitude, norm, beta, ..
            } = preset
            {
                if amplitude.is_some() && norm.is_some() {
                    bad.push(format!("{name}: give either amplitude or norm, not both"));
                }
                if !beta.is_finite() {
                    bad.push(format!("{name}: beta must be finite"));
                }
                if amplitude.is_some_and(|a| !(a >= 0.0)) || norm.is_some_and(|a| !(a >= 0.0)) {
                    bad.push(format!("{name}: amplitude and norm must be >= 0"));
                }
            }
            if let Preset::SingleMode { mode, .. } = preset {
                if name == "u0" && *mode == [0, 0] {
                    bad.push("u0: single_mode needs a nonzero mode".into());
                }
            }
        }
        bad
    }

    pub fn validate(&self) -> Result<()> {
        let bad = self.violations();
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad.join("; ")))
        }
    }

    /// Validates, builds the partition and realises the initial data.
    pub fn prepare(&self) -> Result<Setup> {
        self.validate()?;
        let grid = Grid::new(self.grid.n, self.grid.length)?;
        let part = build_partition(grid)?;
        let u0 = realise(&self.u0, &part, 2, self.params(), self.seed, 0)?;
        let h0 = realise(&self.h0, &part, 1, self.params(), self.seed, 1)?;
        let u0_norm = besov_norm(&part, &u0, self.params())?.total;
        let h0_norm = besov_norm(&part, &h0, self.params())?.total;
        let h_sup = h0.max_abs();
        if !(h_sup < 1.0) {
            return Err(Error::Precondition(format!(
                "||h0||_inf = {h_sup} must be < 1 so that 1 + h0 > 0"
            )));
        }
        Ok(Setup {
            cfg: self.clone(),
            part,
            u0,
            h0,
            u0_norm,
            h0_norm,
        })
    }

    pub fn model(&self) -> SwModel {
        SwModel {
            nu: self.nu,
            sign: self.height_sign.factor(),
        }
    }
}

/// A validated configuration with its partition and band-limited data.
#[derive(Clone, Debug)]
pub struct Setup {
    pub cfg: SwConfig,
    pub part: DyadicPartition,
    pub u0: Field,
    pub h0: Field,
    pub u0_norm: f64,
    pub h0_norm: f64,
}

impl Setup {
    /// A copy with different band-limited initial data.
    pub fn with_data(&self, u0: Field, h0: Field) -> Result<Setup> {
        let params = self.cfg.params();
        Ok(Setup {
            u0_norm: besov_norm(&self.part, &u0, params)?.total,
            h0_norm: besov_norm(&self.part, &h0, params)?.total,
            u0,
            h0,
            cfg: self.cfg.clone(),
            part: self.part.clone(),
        })
    }
}

impl Preset {
    /// Builds the band-limited field with `components` components. Random
    /// presets without their own seed use `seed` on stream `stream`.
    pub fn realise(
        &self,
        part: &DyadicPartition,
        components: usize,
        params: BesovParams,
        seed: u64,
        stream: u64,
    ) -> Result<Field> {
        realise(self, part, components, params, seed, stream)
    }
}

fn realise(
    preset: &Preset,
    part: &DyadicPartition,
    components: usize,
    params: BesovParams,
    seed: u64,
    stream: u64,
) -> Result<Field> {
    let grid = *part.grid();
    let field = match preset {
        Preset::Zero {} => Field::zeros(grid, components),
        Preset::Constant { value } => {
            let c = Field::constant(grid, *value);
            Field::from_components(&vec![c; components])?
        }
        Preset::SingleMode { mode, amplitude } => {
            let dk = grid.dk();
            let (k1, k2) = (mode[0] as f64 * dk, mode[1] as f64 * dk);
            if components == 1 {
                Field::from_fn(grid, |x1, x2| amplitude * (k1 * x1 + k2 * x2).cos())
            } else {
                let k = k1.hypot(k2);
                let s1 = Field::from_fn(grid, |x1, x2| -amplitude * k2 / k * (k1 * x1 + k2 * x2).sin());
                let s2 = Field::from_fn(grid, |x1, x2| amplitude * k1 / k * (k1 * x1 + k2 * x2).sin());
                Field::from_components(&[s1, s2])?
            }
        }
        Preset::Random {
            beta,
            seed: own,
            amplitude,
            norm,
            k_max,
        } => {
            let spec = RandomFieldSpec {
                beta: *beta,
                seed: own.unwrap_or(seed),
                amplitude: amplitude.unwrap_or(1.0),
                k_min: 0.0,
                k_max: *k_max,
            };
            spec.validate(part)?;
            let f = spec.sample(part, components, &mut trial_rng(spec.seed, stream));
            match norm {
                Some(target) => {
                    let current = besov_norm(part, &f, params)?.total;
                    if current > 0.0 {
                        f.scaled(target / current)
                    } else {
                        f
                    }
                }
                None => f,
            }
        }
        Preset::File { path } => {
            let f = if path.extension().is_some_and(|e| e == "csv") {
                let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
                crate::io::field_from_csv(&text)?
            } else {
                crate::io::read_field(path)?
            };
            if f.grid() != &grid || f.components() != components {
                return Err(Error::SizeMismatch(format!(
                    "{}: expected {components} component(s) on n = {}, length = {}",
                    path.display(),
                    grid.n(),
                    grid.length()
                )));
            }
            f
        }
    };
    let out = dealias(&field);
    part.check_coverage(&crate::grid::dft_forward(&out))?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_fills_defaults() {
        let cfg: SwConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(cfg, SwConfig::default());
        cfg.validate().unwrap();
    }

    #[test]
    fn all_violations_are_reported() {
        let cfg = SwConfig {
            nu: 1.5,
            dt: -1.0,
            n_iters: 1,
            ..Default::default()
        };
        let bad = cfg.violations();
        assert_eq!(bad.len(), 3, "{bad:?}");
        assert!(bad[0].contains("nu = 1.5"));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<SwConfig>(r#"{"nuu": 0.5}"#).is_err());
        assert!(serde_json::from_str::<SwConfig>(r#"{"u0": {"kind": "zero", "x": 1}}"#).is_err());
    }

    #[test]
    fn single_mode_velocity_is_divergence_free() {
        let cfg = SwConfig {
            u0: Preset::SingleMode {
                mode: [1, 2],
                amplitude: 0.01,
            },
            h0: Preset::SingleMode {
                mode: [0, 1],
                amplitude: 0.002,
            },
            ..Default::default()
        };
        let st = cfg.prepare().unwrap();
        let div = crate::grid::divergence(&st.u0).unwrap();
        assert!(div.max_abs() < 1e-15);
        assert!((st.h0.max_abs() - 0.002).abs() < 1e-15);
        assert!((st.u0.max_abs() - 0.01).abs() < 1e-4);
    }

    #[test]
    fn random_preset_hits_target_norm() {
        let cfg = SwConfig {
            u0: Preset::Random {
                beta: 3.0,
                seed: Some(4),
                amplitude: None,
                norm: Some(0.006),
                k_max: None,
            },
            ..Default::default()
        };
        let st = cfg.prepare().unwrap();
        assert!((st.u0_norm - 0.006).abs() < 1e-15);
        assert_eq!(st.h0_norm, 0.0);
    }

    #[test]
    fn large_height_is_refused() {
        let cfg = SwConfig {
            h0: Preset::Constant { value: 1.0 },
            ..Default::default()
        };
        assert!(matches!(cfg.prepare(), Err(Error::Precondition(_))));
    }
}
