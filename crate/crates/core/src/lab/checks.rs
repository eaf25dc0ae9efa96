use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{run_trials, EstimateReport, RandomFieldSpec, TrialOutcome};
use crate::besov::{besov_norm, lp_norm, time_norm, BesovParams, Exponent};
use crate::error::{Error, Result};
use crate::grid::{dealias, dft_forward, dft_inverse, gradient, pointwise_product, Field, SpectralField};
use crate::partition::{paraproduct, remainder, DyadicPartition};

fn bnorm(part: &DyadicPartition, f: &Field, s: f64, p: Exponent, r: Exponent) -> Result<f64> {
    Ok(besov_norm(part, f, BesovParams { s, p, r })?.total)
}

fn param_map<T: Serialize>(p: &T) -> BTreeMap<String, serde_json::Value> {
    match serde_json::to_value(p).expect("params serialize") {
        serde_json::Value::Object(m) => m.into_iter().collect(),
        _ => BTreeMap::new(),
    }
}

fn refuse(name: &str, problems: Vec<String>) -> Result<()> {
    if problems.is_empty() {
        Ok(())
    } else {
        Err(Error::Precondition(format!("{name}: {}", problems.join("; "))))
    }
}

/// Embedding `B^s_{p1,r1} -> B^{s - 2(1/p1 - 1/p2)}_{p2,r2}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmbeddingParams {
    pub s: f64,
    pub p1: Exponent,
    pub r1: Exponent,
    pub p2: Exponent,
    pub r2: Exponent,
}

impl Default for EmbeddingParams {
    fn default() -> Self {
        EmbeddingParams {
            s: 1.5,
            p1: Exponent::finite(1.0),
            r1: Exponent::finite(1.0),
            p2: Exponent::finite(2.0),
            r2: Exponent::finite(2.0),
        }
    }
}

pub fn check_embedding(
    part: &DyadicPartition,
    spec: &RandomFieldSpec,
    trials: usize,
    prm: &EmbeddingParams,
) -> Result<EstimateReport> {
    let mut bad = Vec::new();
    if prm.p1 > prm.p2 {
        bad.push(format!("requires p1 <= p2, got p1 = {}, p2 = {}", prm.p1, prm.p2));
    }
    if prm.r1 > prm.r2 {
        bad.push(format!("requires r1 <= r2, got r1 = {}, r2 = {}", prm.r1, prm.r2));
    }
    refuse("embedding", bad)?;
    spec.validate(part)?;
    let target = prm.s - 2.0 * (prm.p1.reciprocal() - prm.p2.reciprocal());
    run_trials("embedding", trials, spec.seed, param_map(prm), |rng| {
        let f = spec.sample(part, 1, rng);
        Ok(TrialOutcome::single(
            "main",
            bnorm(part, &f, target, prm.p2, prm.r2)?,
            bnorm(part, &f, prm.s, prm.p1, prm.r1)?,
        ))
    })
}

/// `||grad u||_{B^{s-1}_{p,r}} <= C ||u||_{B^s_{p,r}}`, also used by the
/// L-infinity embedding, composition and algebra checks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SprParams {
    pub s: f64,
    pub p: Exponent,
    pub r: Exponent,
}

impl Default for SprParams {
    fn default() -> Self {
        SprParams {
            s: 1.5,
            p: Exponent::finite(2.0),
            r: Exponent::finite(2.0),
        }
    }
}

pub fn check_gradient(
    part: &DyadicPartition,
    spec: &RandomFieldSpec,
    trials: usize,
    prm: &SprParams,
) -> Result<EstimateReport> {
    spec.validate(part)?;
    run_trials("gradient", trials, spec.seed, param_map(prm), |rng| {
        let u = spec.sample(part, 1, rng);
        let g = gradient(&u)?;
        Ok(TrialOutcome::single(
            "main",
            bnorm(part, &g, prm.s - 1.0, prm.p, prm.r)?,
            bnorm(part, &u, prm.s, prm.p, prm.r)?,
        ))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterpolationParams {
    pub s1: f64,
    pub s2: f64,
    pub theta: f64,
    pub p: Exponent,
    pub r: Exponent,
}

impl Default for InterpolationParams {
    fn default() -> Self {
        InterpolationParams {
            s1: 0.5,
            s2: 2.0,
            theta: 0.5,
            p: Exponent::finite(2.0),
            r: Exponent::finite(2.0),
        }
    }
}

pub fn check_interpolation(
    part: &DyadicPartition,
    spec: &RandomFieldSpec,
    trials: usize,
    prm: &InterpolationParams,
) -> Result<EstimateReport> {
    let mut bad = Vec::new();
    if prm.s1 >= prm.s2 {
        bad.push(format!("requires s1 < s2, got s1 = {}, s2 = {}", prm.s1, prm.s2));
    }
    if !(prm.theta > 0.0 && prm.theta < 1.0) {
        bad.push(format!("requires theta in (0, 1), got {}", prm.theta));
    }
    refuse("interpolation", bad)?;
    spec.validate(part)?;
    let mid = prm.theta * prm.s1 + (1.0 - prm.theta) * prm.s2;
    run_trials("interpolation", trials, spec.seed, param_map(prm), |rng| {
        let u = spec.sample(part, 1, rng);
        let a = bnorm(part, &u, prm.s1, prm.p, prm.r)?;
        let b = bnorm(part, &u, prm.s2, prm.p, prm.r)?;
        Ok(TrialOutcome::single(
            "main",
            bnorm(part, &u, mid, prm.p, prm.r)?,
            a.powf(prm.theta) * b.powf(1.0 - prm.theta),
        ))
    })
}

/// `s > 2/p`, or `s = 2/p` with `r = 1`.
pub fn above_critical(s: f64, p: Exponent, r: Exponent) -> bool {
    let crit = 2.0 * p.reciprocal();
    s > crit || (s == crit && r.value() == 1.0)
}

pub fn check_linfty_embedding(
    part: &DyadicPartition,
    spec: &RandomFieldSpec,
    trials: usize,
    prm: &SprParams,
) -> Result<EstimateReport> {
    if !above_critical(prm.s, prm.p, prm.r) {
        return Err(Error::Precondition(format!(
            "linfty_embedding: requires s > 2/p or s = 2/p with r = 1, got s = {}, p = {}, r = {}",
            prm.s, prm.p, prm.r
        )));
    }
    spec.validate(part)?;
    run_trials("linfty_embedding", trials, spec.seed, param_map(prm), |rng| {
        let u = spec.sample(part, 1, rng);
        Ok(TrialOutcome::single(
            "main",
            u.max_abs(),
            bnorm(part, &u, prm.s, prm.p, prm.r)?,
        ))
    })
}

/// Band projection of `ln(1 + u)`.
pub fn log_composition(u: &Field) -> Result<Field> {
    if u.values().iter().any(|&v| v <= -1.0) {
        return Err(Error::Precondition("ln(1 + u) needs u > -1".into()));
    }
    let raw = Field::from_values(*u.grid(), u.components(), u.values().iter().map(|v| v.ln_1p()).collect())?;
    Ok(dealias(&raw))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompositionParams {
    pub s: f64,
    pub p: Exponent,
    pub r: Exponent,
    /// Per-trial RMS amplitudes are drawn uniformly from `(0, max_amplitude]`;
    /// draws with sup norm above 1/2 are regenerated.
    pub max_amplitude: f64,
}

impl Default for CompositionParams {
    fn default() -> Self {
        CompositionParams {
            s: 1.5,
            p: Exponent::finite(2.0),
            r: Exponent::finite(2.0),
            max_amplitude: 0.2,
        }
    }
}

/// Upper bound on `||u||_inf` for composition trials.
pub const COMPOSITION_SUP: f64 = 0.5;

pub fn check_composition(
    part: &DyadicPartition,
    spec: &RandomFieldSpec,
    trials: usize,
    prm: &CompositionParams,
) -> Result<EstimateReport> {
    let mut bad = Vec::new();
    if prm.s <= 0.0 {
        bad.push(format!("requires s > 0, got {}", prm.s));
    }
    if !(prm.max_amplitude > 0.0 && prm.max_amplitude <= COMPOSITION_SUP) {
        bad.push(format!("max_amplitude = {} must lie in (0, 1/2]", prm.max_amplitude));
    }
    refuse("composition", bad)?;
    spec.validate(part)?;
    run_trials("composition", trials, spec.seed, param_map(prm), |rng| {
        let mut regenerated = 0;
        loop {
            let rms = prm.max_amplitude * (1.0 - rng.random::<f64>());
            let u = RandomFieldSpec { amplitude: rms, ..spec.clone() }.sample(part, 1, rng);
            if u.max_abs() > COMPOSITION_SUP {
                regenerated += 1;
                if regenerated > 1000 {
                    return Err(Error::Precondition(
                        "composition: could not draw a field with sup norm <= 1/2".into(),
                    ));
                }
                continue;
            }
            let w = log_composition(&u)?;
            return Ok(TrialOutcome {
                forms: vec![(
                    "main",
                    bnorm(part, &w, prm.s, prm.p, prm.r)?,
                    bnorm(part, &u, prm.s, prm.p, prm.r)?,
                )],
                regenerated,
            });
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ParaproductParams {
    pub s: f64,
    pub t: f64,
    pub p: Exponent,
    pub r1: Exponent,
    pub r2: Exponent,
    /// Largest admissible `t`; the second bound degenerates as `t -> 0-`.
    pub t_ceiling: f64,
}

impl Default for ParaproductParams {
    fn default() -> Self {
        ParaproductParams {
            s: 1.0,
            t: -0.5,
            p: Exponent::finite(2.0),
            r1: Exponent::finite(2.0),
            r2: Exponent::finite(2.0),
            t_ceiling: -0.1,
        }
    }
}

pub fn check_paraproduct(
    part: &DyadicPartition,
    spec: &RandomFieldSpec,
    trials: usize,
    prm: &ParaproductParams,
) -> Result<EstimateReport> {
    let mut bad = Vec::new();
    if prm.t >= 0.0 {
        bad.push(format!("requires t < 0, got {}", prm.t));
    } else if prm.t > prm.t_ceiling {
        bad.push(format!("t = {} lies above the probing ceiling {}", prm.t, prm.t_ceiling));
    }
    refuse("paraproduct", bad)?;
    spec.validate(part)?;
    let r = Exponent::from_reciprocal((prm.r1.reciprocal() + prm.r2.reciprocal()).min(1.0))?;
    let mut params = param_map(prm);
    params.insert("r".into(), serde_json::to_value(r).unwrap());
    run_trials("paraproduct", trials, spec.seed, params, |rng| {
        let u = spec.sample(part, 1, rng);
        let v = spec.sample(part, 1, rng);
        let tuv = paraproduct(part, &u, &v)?;
        let v_s = bnorm(part, &v, prm.s, prm.p, prm.r2)?;
        let lhs_a = bnorm(part, &tuv, prm.s, prm.p, prm.r2)?;
        let lhs_b = bnorm(part, &tuv, prm.s + prm.t, prm.p, r)?;
        let u_t = bnorm(part, &u, prm.t, Exponent::INFINITY, prm.r1)?;
        Ok(TrialOutcome {
            forms: vec![
                ("linfty", lhs_a, u.max_abs() * v_s),
                ("negative_index", lhs_b, u_t * v_s / (-prm.t)),
            ],
            regenerated: 0,
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RemainderParams {
    pub s1: f64,
    pub s2: f64,
    pub p1: Exponent,
    pub p2: Exponent,
    pub r1: Exponent,
    pub r2: Exponent,
}

impl Default for RemainderParams {
    fn default() -> Self {
        RemainderParams {
            s1: 1.0,
            s2: 0.5,
            p1: Exponent::finite(2.0),
            p2: Exponent::finite(2.0),
            r1: Exponent::finite(2.0),
            r2: Exponent::finite(2.0),
        }
    }
}

pub fn check_remainder(
    part: &DyadicPartition,
    spec: &RandomFieldSpec,
    trials: usize,
    prm: &RemainderParams,
) -> Result<EstimateReport> {
    let inv_p = prm.p1.reciprocal() + prm.p2.reciprocal();
    let inv_r = prm.r1.reciprocal() + prm.r2.reciprocal();
    let sum = prm.s1 + prm.s2;
    let mut bad = Vec::new();
    if inv_p > 1.0 {
        bad.push(format!("requires 1/p1 + 1/p2 <= 1, got {inv_p}"));
    }
    if inv_r > 1.0 {
        bad.push(format!("requires 1/r1 + 1/r2 <= 1, got {inv_r}"));
    }
    let strict = sum > 0.0;
    let weak = sum == 0.0 && inv_r == 1.0;
    if !strict && !weak {
        bad.push(format!(
            "requires s1 + s2 > 0, or s1 + s2 = 0 with r = 1; got s1 + s2 = {sum}, 1/r = {inv_r}"
        ));
    }
    refuse("remainder", bad)?;
    spec.validate(part)?;
    let p = Exponent::from_reciprocal(inv_p)?;
    let r = Exponent::from_reciprocal(inv_r)?;
    let mut params = param_map(prm);
    params.insert("p".into(), serde_json::to_value(p).unwrap());
    params.insert("r".into(), serde_json::to_value(r).unwrap());
    run_trials("remainder", trials, spec.seed, params, |rng| {
        let u = spec.sample(part, 1, rng);
        let v = spec.sample(part, 1, rng);
        let rem = remainder(part, &u, &v)?;
        let base = bnorm(part, &u, prm.s1, prm.p1, prm.r1)? * bnorm(part, &v, prm.s2, prm.p2, prm.r2)?;
        let out = if strict {
            ("strict", bnorm(part, &rem, sum, p, r)?, base / sum)
        } else {
            ("weak", bnorm(part, &rem, 0.0, p, Exponent::INFINITY)?, base)
        };
        Ok(TrialOutcome::single(out.0, out.1, out.2))
    })
}

pub fn check_algebra(
    part: &DyadicPartition,
    spec: &RandomFieldSpec,
    trials: usize,
    prm: &SprParams,
) -> Result<EstimateReport> {
    if !above_critical(prm.s, prm.p, prm.r) {
        return Err(Error::Precondition(format!(
            "algebra: requires s > 2/p or s = 2/p with r = 1, got s = {}, p = {}, r = {}",
            prm.s, prm.p, prm.r
        )));
    }
    spec.validate(part)?;
    run_trials("algebra", trials, spec.seed, param_map(prm), |rng| {
        let u = spec.sample(part, 1, rng);
        let v = spec.sample(part, 1, rng);
        let uv = pointwise_product(&u, &v)?;
        let lhs = bnorm(part, &uv, prm.s, prm.p, prm.r)?;
        let bu = bnorm(part, &u, prm.s, prm.p, prm.r)?;
        let bv = bnorm(part, &v, prm.s, prm.p, prm.r)?;
        Ok(TrialOutcome {
            forms: vec![
                ("product", lhs, bu * bv / prm.s),
                ("tame", lhs, (u.max_abs() * bv + v.max_abs() * bu) / prm.s),
            ],
            regenerated: 0,
        })
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HeatParams {
    pub nu: f64,
    pub lambda: f64,
    pub a: Exponent,
    pub b: Exponent,
    pub p: Exponent,
    pub q: Exponent,
    pub horizon: f64,
    /// Number of time intervals for the trapezoid rule.
    pub intervals: usize,
}

impl Default for HeatParams {
    fn default() -> Self {
        HeatParams {
            nu: 0.5,
            lambda: 2.0,
            a: Exponent::finite(2.0),
            b: Exponent::finite(4.0),
            p: Exponent::finite(2.0),
            q: Exponent::finite(4.0),
            horizon: 1.0,
            intervals: 64,
        }
    }
}

/// Inner and outer radius of the annulus `lambda * [3/4, 8/3]`.
pub fn heat_annulus(lambda: f64) -> (f64, f64) {
    (0.75 * lambda, 8.0 / 3.0 * lambda)
}

/// Exact solution of `u_t = nu lap u + cos(omega t) F` at the given times,
/// evaluated mode by mode.
pub fn heat_solution(u0: &Field, forcing: &Field, omega: f64, nu: f64, times: &[f64]) -> Result<Vec<Field>> {
    let a0 = dft_forward(u0);
    let f0 = dft_forward(forcing);
    a0.ensure_compatible(&f0)?;
    let grid = *u0.grid();
    let radii = grid.radii();
    let len = grid.len();
    Ok(times
        .iter()
        .map(|&t| {
            let mut coeffs = vec![Complex64::new(0.0, 0.0); a0.coeffs().len()];
            for (idx, slot) in coeffs.iter_mut().enumerate() {
                let k = radii[idx % len];
                let rate = nu * k * k;
                let decay = (-rate * t).exp();
                let denom = rate * rate + omega * omega;
                let duhamel = if denom == 0.0 {
                    t
                } else {
                    (rate * (omega * t).cos() + omega * (omega * t).sin() - rate * decay) / denom
                };
                *slot = a0.coeffs()[idx] * decay + f0.coeffs()[idx] * duhamel;
            }
            dft_inverse(&SpectralField::from_coeffs(grid, u0.components(), coeffs).expect("sized"))
        })
        .collect())
}

pub fn check_heat_smoothing(
    part: &DyadicPartition,
    spec: &RandomFieldSpec,
    trials: usize,
    prm: &HeatParams,
) -> Result<EstimateReport> {
    let mut bad = Vec::new();
    if !(prm.nu > 0.0) {
        bad.push(format!("requires nu > 0, got {}", prm.nu));
    }
    if !(prm.lambda > 0.0) {
        bad.push(format!("requires lambda > 0, got {}", prm.lambda));
    }
    if prm.a > prm.b {
        bad.push(format!("requires a <= b, got a = {}, b = {}", prm.a, prm.b));
    }
    if prm.p > prm.q {
        bad.push(format!("requires p <= q, got p = {}, q = {}", prm.p, prm.q));
    }
    if !(prm.horizon > 0.0) || prm.intervals == 0 {
        bad.push("requires a positive horizon and at least one interval".into());
    }
    let (lo, hi) = heat_annulus(prm.lambda);
    let top = hi.min(part.grid().dealias_radius());
    if lo >= top {
        bad.push(format!(
            "annulus [{lo}, {hi}] lies outside the dealias band of radius {}",
            part.grid().dealias_radius()
        ));
    }
    refuse("heat_smoothing", bad)?;
    let band = spec.with_band(lo, top);
    let times: Vec<f64> = (0..=prm.intervals)
        .map(|i| prm.horizon * i as f64 / prm.intervals as f64)
        .collect();
    let scale = prm.nu * prm.lambda * prm.lambda;
    let gain = prm.lambda.powf(2.0 * (prm.a.reciprocal() - prm.b.reciprocal()));
    let w0 = scale.powf(-prm.q.reciprocal()) * gain;
    let w1 = scale.powf(-1.0 + prm.p.reciprocal() - prm.q.reciprocal()) * gain;
    run_trials("heat_smoothing", trials, spec.seed, param_map(prm), |rng| {
        let u0 = band.sample(part, 1, rng);
        let forcing = band.sample(part, 1, rng);
        let omega = 4.0 * PI / prm.horizon * rng.random::<f64>();
        let sol = heat_solution(&u0, &forcing, omega, prm.nu, &times)?;
        let lb: Vec<f64> = sol.iter().map(|f| lp_norm(f, prm.b)).collect();
        let lhs = time_norm(&times, &lb, prm.q);
        let amp: Vec<f64> = times.iter().map(|t| (omega * t).cos().abs()).collect();
        let f_norm = lp_norm(&forcing, prm.a) * time_norm(&times, &amp, prm.p);
        Ok(TrialOutcome::single("main", lhs, w0 * lp_norm(&u0, prm.a) + w1 * f_norm))
    })
}

/// A lab check with its parameters, tagged by name for configuration files.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "check", rename_all = "snake_case")]
pub enum LabCheck {
    Embedding(EmbeddingParams),
    Gradient(SprParams),
    Interpolation(InterpolationParams),
    LinftyEmbedding(SprParams),
    Composition(CompositionParams),
    Paraproduct(ParaproductParams),
    Remainder(RemainderParams),
    Algebra(SprParams),
    HeatSmoothing(HeatParams),
}

impl LabCheck {
    pub const NAMES: [&'static str; 9] = [
        "embedding",
        "gradient",
        "interpolation",
        "linfty_embedding",
        "composition",
        "paraproduct",
        "remainder",
        "algebra",
        "heat_smoothing",
    ];

    /// Parses a check by name, overriding defaults from a JSON object.
    pub fn from_name(name: &str, params: Option<&serde_json::Value>) -> Result<Self> {
        if !Self::NAMES.contains(&name) {
            return Err(Error::Config(format!(
                "unknown check {name:?}; expected one of {}",
                Self::NAMES.join(", ")
            )));
        }
        let mut obj = match params {
            None => serde_json::Map::new(),
            Some(serde_json::Value::Object(m)) => m.clone(),
            Some(other) => {
                return Err(Error::Config(format!("check parameters must be an object, got {other}")))
            }
        };
        obj.insert("check".into(), serde_json::Value::String(name.into()));
        serde_json::from_value(serde_json::Value::Object(obj))
            .map_err(|e| Error::Config(format!("{name}: {e}")))
    }

    pub fn name(&self) -> &'static str {
        match self {
            LabCheck::Embedding(_) => "embedding",
            LabCheck::Gradient(_) => "gradient",
            LabCheck::Interpolation(_) => "interpolation",
            LabCheck::LinftyEmbedding(_) => "linfty_embedding",
            LabCheck::Composition(_) => "composition",
            LabCheck::Paraproduct(_) => "paraproduct",
            LabCheck::Remainder(_) => "remainder",
            LabCheck::Algebra(_) => "algebra",
            LabCheck::HeatSmoothing(_) => "heat_smoothing",
        }
    }

    pub fn run(&self, part: &DyadicPartition, spec: &RandomFieldSpec, trials: usize) -> Result<EstimateReport> {
        match self {
            LabCheck::Embedding(p) => check_embedding(part, spec, trials, p),
            LabCheck::Gradient(p) => check_gradient(part, spec, trials, p),
            LabCheck::Interpolation(p) => check_interpolation(part, spec, trials, p),
            LabCheck::LinftyEmbedding(p) => check_linfty_embedding(part, spec, trials, p),
            LabCheck::Composition(p) => check_composition(part, spec, trials, p),
            LabCheck::Paraproduct(p) => check_paraproduct(part, spec, trials, p),
            LabCheck::Remainder(p) => check_remainder(part, spec, trials, p),
            LabCheck::Algebra(p) => check_algebra(part, spec, trials, p),
            LabCheck::HeatSmoothing(p) => check_heat_smoothing(part, spec, trials, p),
        }
    }

    /// The eight checks whose constants must stabilise, with default parameters.
    pub fn stability_suite() -> Vec<LabCheck> {
        vec![
            LabCheck::Embedding(Default::default()),
            LabCheck::Gradient(Default::default()),
            LabCheck::LinftyEmbedding(Default::default()),
            LabCheck::Composition(Default::default()),
            LabCheck::Paraproduct(Default::default()),
            LabCheck::Remainder(Default::default()),
            LabCheck::Algebra(Default::default()),
            LabCheck::HeatSmoothing(Default::default()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::Grid;
    use crate::partition::build_partition;

    fn part() -> DyadicPartition {
        build_partition(Grid::new(64, 8.0 * PI).unwrap()).unwrap()
    }

    #[test]
    fn preconditions_refuse() {
        let p = part();
        let spec = RandomFieldSpec::default();
        let bad = EmbeddingParams { p1: Exponent::finite(4.0), ..Default::default() };
        assert!(check_embedding(&p, &spec, 4, &bad).is_err());
        let crit = SprParams { s: 0.5, ..Default::default() };
        assert!(matches!(check_linfty_embedding(&p, &spec, 4, &crit), Err(Error::Precondition(_))));
        assert!(check_algebra(&p, &spec, 4, &crit).is_err());
        let edge = SprParams { s: 1.0, r: Exponent::finite(1.0), ..Default::default() };
        assert!(check_linfty_embedding(&p, &spec, 4, &edge).is_ok());
        let near_zero = ParaproductParams { t: -0.05, ..Default::default() };
        assert!(check_paraproduct(&p, &spec, 4, &near_zero).is_err());
        let interp = InterpolationParams { s1: 2.0, s2: 1.0, ..Default::default() };
        assert!(check_interpolation(&p, &spec, 4, &interp).is_err());
        let rem = RemainderParams { s1: -1.0, ..Default::default() };
        assert!(check_remainder(&p, &spec, 4, &rem).is_err());
        let heat = HeatParams { lambda: 20.0, ..Default::default() };
        assert!(check_heat_smoothing(&p, &spec, 4, &heat).is_err());
    }

    #[test]
    fn check_parsing() {
        let c = LabCheck::from_name("interpolation", Some(&serde_json::json!({"theta": 0.25}))).unwrap();
        match c {
            LabCheck::Interpolation(p) => assert_eq!(p.theta, 0.25),
            _ => panic!(),
        }
        assert!(LabCheck::from_name("interpolation", Some(&serde_json::json!({"thta": 0.25}))).is_err());
        assert!(LabCheck::from_name("nope", None).is_err());
        let inf = LabCheck::from_name("embedding", Some(&serde_json::json!({"r2": "inf"}))).unwrap();
        assert_eq!(LabCheck::from_name(inf.name(), Some(&serde_json::to_value(&inf).unwrap())).unwrap(), inf);
    }

    #[test]
    fn interpolation_holds_with_unit_constant() {
        let rep = check_interpolation(&part(), &RandomFieldSpec::default(), 40, &Default::default()).unwrap();
        assert!(rep.worst_ratio <= 1.0 + 1e-10);
        assert_eq!(rep.skipped, 0);
    }

    /// Single mode inside one block: gradient ratio equals |k| 2^{-j}... up to the
    /// L^2 weighting of the one or two blocks carrying the mode.
    #[test]
    fn gradient_single_mode_oracle() {
        let p = part();
        let g = *p.grid();
        let k = 12.0 * g.dk();
        let u = Field::from_fn(g, |x, _| (k * x).cos());
        let prm = SprParams::default();
        let lhs = bnorm(&p, &gradient(&u).unwrap(), prm.s - 1.0, prm.p, prm.r).unwrap();
        let rhs = bnorm(&p, &u, prm.s, prm.p, prm.r).unwrap();
        // Every block of grad u is k times the matching block of u (rotated), so
        // the ladder ratio is k 2^{-j}; aggregate over the active blocks.
        let l2 = lp_norm(&u, prm.p);
        let mut num = 0.0;
        let mut den = 0.0;
        for j in p.blocks() {
            let m = p.table(j).unwrap()[12];
            let w = 2f64.powf(j as f64 * prm.s) * m * l2;
            den += w * w;
            num += (k * 2f64.powi(-j) * w).powi(2);
        }
        assert!((lhs / rhs - (num / den).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn composition_linearises() {
        let p = part();
        let g = *p.grid();
        let u = Field::from_fn(g, |x, y| (0.5 * x).cos() * (0.75 * y).sin());
        let prm = SprParams::default();
        let mut last = f64::INFINITY;
        for amp in [1e-1, 1e-2, 1e-3, 1e-4] {
            let v = u.scaled(amp);
            let r = bnorm(&p, &log_composition(&v).unwrap(), prm.s, prm.p, prm.r).unwrap()
                / bnorm(&p, &v, prm.s, prm.p, prm.r).unwrap();
            assert!((r - 1.0).abs() < last);
            last = (r - 1.0).abs();
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn heat_exact_cases() {
        let g = Grid::new(32, 2.0 * PI * 4.0).unwrap();
        let k = 3.0 * g.dk();
        let nu = 0.3;
        let u0 = Field::from_fn(g, |x, _| (k * x).cos());
        let zero = Field::zeros(g, 1);
        let sol = heat_solution(&u0, &zero, 0.0, nu, &[0.0, 1.0]).unwrap();
        let expected = u0.scaled((-nu * k * k).exp());
        assert!(sol[1].sub(&expected).unwrap().max_abs() < 1e-13);
        let forced = heat_solution(&zero, &u0, 0.0, nu, &[2.0]).unwrap();
        let rate = nu * k * k;
        let duhamel = u0.scaled((1.0 - (-rate * 2.0).exp()) / rate);
        assert!(forced[0].sub(&duhamel).unwrap().max_abs() < 1e-13);
    }

    #[test]
    fn zero_paraproduct_and_remainder() {
        let p = part();
        let g = *p.grid();
        let z = Field::zeros(g, 1);
        let v = Field::from_fn(g, |x, _| (0.5 * x).cos());
        assert_eq!(paraproduct(&p, &z, &v).unwrap().max_abs(), 0.0);
        assert_eq!(remainder(&p, &v, &z).unwrap().max_abs(), 0.0);
    }
}
