//! Long-time small-data runs and continuity in the data.

use serde::{Deserialize, Serialize};

use crate::besov::{besov_norm, sobolev_norm, BesovParams};
use crate::error::{Error, Result};
use crate::grid::{dealias, Field};

use super::model::{integrate, DirectRun};
use super::Setup;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub t: f64,
    pub u_besov: f64,
    pub h_besov: f64,
    /// `||u(t)||_{H^{s1}}`.
    pub u_sobolev: f64,
    /// `||u||_{L^2_t H^{s1+1}}` over `[0, t]`.
    pub u_dissipation: f64,
    pub min_height: f64,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegimeExitRecord {
    pub t: f64,
    pub min_height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GlobalReport {
    pub horizon: f64,
    pub dt: f64,
    pub steps: usize,
    pub checkpoint_every: usize,
    pub s1: f64,
    pub epsilon: f64,
    pub eta: Option<f64>,
    /// `||u0||_{B^s} + ||h0||_{B^s}`.
    pub initial_size: f64,
    pub checkpoints: Vec<Checkpoint>,
    pub regime_exit: Option<RegimeExitRecord>,
    pub completed: bool,
    /// `C` of the envelope `C e^{Ct}` fitted on the first half of the run.
    pub envelope_c: f64,
    pub fit_until: f64,
    pub sup_norm: f64,
    pub below_envelope: bool,
    pub mass_drift: f64,
    pub max_courant: f64,
}

/// Smallest `C >= 0` with `v(t) <= C e^{Ct}` for every sample with `t <= until`.
pub fn fit_envelope(times: &[f64], values: &[f64], until: f64) -> f64 {
    let ok = |c: f64| {
        times
            .iter()
            .zip(values)
            .filter(|(t, _)| **t <= until)
            .all(|(t, v)| *v <= c * (c * t).exp())
    };
    let top = values.iter().copied().fold(0.0, f64::max);
    if top == 0.0 {
        return 0.0;
    }
    // C e^{Ct} >= C, so the largest value is always admissible.
    let (mut lo, mut hi) = (0.0, top);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    hi
}

fn checkpoints(setup: &Setup, run: &DirectRun, s1: f64) -> Result<Vec<Checkpoint>> {
    let params = setup.cfg.params();
    let mut out = Vec::with_capacity(run.u.snapshots.len());
    let mut dissipation = 0.0;
    let mut prev: Option<(f64, f64)> = None;
    for (((t, u), (_, h)), mass) in run.u.snapshots.iter().zip(&run.h.snapshots).zip(&run.mass) {
        let g = sobolev_norm(u, s1 + 1.0).powi(2);
        if let Some((tp, gp)) = prev {
            dissipation += 0.5 * (t - tp) * (g + gp);
        }
        prev = Some((*t, g));
        out.push(Checkpoint {
            t: *t,
            u_besov: besov_norm(&setup.part, u, params)?.total,
            h_besov: besov_norm(&setup.part, h, params)?.total,
            u_sobolev: sobolev_norm(u, s1),
            u_dissipation: dissipation.sqrt(),
            min_height: 1.0 + h.min_value(),
            mass: *mass,
        });
    }
    Ok(out)
}

/// Runs the direct solver to `cfg.horizon`, logging norms every
/// `cfg.checkpoint_every` steps. A regime exit ends the run and is reported.
pub fn global_run(setup: &Setup) -> Result<GlobalReport> {
    let cfg = &setup.cfg;
    if cfg.p.value() > 2.0 {
        return Err(Error::Precondition(format!("global runs need p <= 2, got p = {}", cfg.p)));
    }
    let initial_size = setup.u0_norm + setup.h0_norm;
    if let Some(eta) = cfg.eta {
        if initial_size > eta {
            return Err(Error::Precondition(format!(
                "||u0||_B^s + ||h0||_B^s = {initial_size:.6e} exceeds eta = {eta}"
            )));
        }
    }
    let s1 = cfg.s - 2.0 / cfg.p.value() + 1.0 - cfg.epsilon;
    let (run, failure) = integrate(&cfg.model(), &setup.u0, &setup.h0, cfg.horizon, cfg.dt, cfg.checkpoint_every)?;
    let regime_exit = match failure {
        None => None,
        Some(Error::RegimeExit { t, min_height }) => Some(RegimeExitRecord { t, min_height }),
        Some(e) => return Err(e),
    };
    let points = checkpoints(setup, &run, s1)?;
    let times: Vec<f64> = points.iter().map(|c| c.t).collect();
    let sizes: Vec<f64> = points.iter().map(|c| c.u_besov + c.h_besov).collect();
    let fit_until = 0.5 * cfg.horizon;
    let c = fit_envelope(&times, &sizes, fit_until);
    let below = times
        .iter()
        .zip(&sizes)
        .all(|(t, v)| *v <= c * (c * t).exp() * (1.0 + 1e-12));
    Ok(GlobalReport {
        horizon: cfg.horizon,
        dt: run.u.meta.dt,
        steps: run.u.meta.steps,
        checkpoint_every: cfg.checkpoint_every,
        s1,
        epsilon: cfg.epsilon,
        eta: cfg.eta,
        initial_size,
        completed: regime_exit.is_none(),
        regime_exit,
        envelope_c: c,
        fit_until,
        sup_norm: sizes.iter().copied().fold(0.0, f64::max),
        below_envelope: below,
        mass_drift: run.relative_mass_drift(),
        max_courant: run.max_courant,
        checkpoints: points,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRun {
    /// Multiple of the base data difference.
    pub scale: f64,
    pub initial_gap: f64,
    /// `sup_t ||u - v||_{B^s} + ||h - g||_{B^s}`, or `None` after a regime exit.
    pub trajectory_gap: Option<f64>,
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DivergenceReport {
    pub horizon: f64,
    /// Base gap and two halvings.
    pub runs: Vec<GapRun>,
    /// Successive trajectory-gap ratios across halvings.
    pub reductions: Vec<f64>,
    pub min_reduction: f64,
    pub passed: bool,
    /// Eightfold gap, recorded for contrast.
    pub control: GapRun,
}

/// Required shrinkage of the trajectory gap per halving of the data gap.
pub const MIN_REDUCTION: f64 = 1.5;

fn gap_run(a: &Setup, a_run: &DirectRun, b: &Setup, scale: f64, horizon: f64) -> Result<GapRun> {
    let params: BesovParams = a.cfg.params();
    let norm = |x: &Field, y: &Field| -> Result<f64> {
        Ok(besov_norm(&a.part, &dealias(&x.sub(y)?), params)?.total)
    };
    let initial_gap = norm(&b.u0, &a.u0)? + norm(&b.h0, &a.h0)?;
    let (b_run, failure) = integrate(&b.cfg.model(), &b.u0, &b.h0, horizon, a.cfg.dt, 1)?;
    match failure {
        None => {}
        Some(Error::RegimeExit { t, .. }) => {
            return Ok(GapRun {
                scale,
                initial_gap,
                trajectory_gap: None,
                note: Some(format!("regime exit at t = {t:.6}")),
            })
        }
        Some(e) => return Err(e),
    }
    let mut worst: f64 = 0.0;
    for (i, ((_, u), (_, v))) in a_run.u.snapshots.iter().zip(&b_run.u.snapshots).enumerate() {
        let g = norm(v, u)? + norm(&b_run.h.snapshots[i].1, &a_run.h.snapshots[i].1)?;
        worst = worst.max(g);
    }
    Ok(GapRun {
        scale,
        initial_gap,
        trajectory_gap: Some(worst),
        note: None,
    })
}

/// `a + scale (b - a)`, exactly `a` when the two agree.
fn blend(a: &Field, b: &Field, scale: f64) -> Result<Field> {
    a.add(&b.sub(a)?.scaled(scale))
}

/// Solves from the data of `a` and of `a + k (b - a)` for `k = 1, 1/2, 1/4`
/// and an eightfold control, comparing trajectories up to `horizon`.
pub fn uniqueness_probe(a: &Setup, b: &Setup, horizon: f64) -> Result<DivergenceReport> {
    if a.part.grid() != b.part.grid() || a.cfg.model() != b.cfg.model() {
        return Err(Error::Precondition("configs must differ only in their initial data".into()));
    }
    let (a_run, failure) = integrate(&a.cfg.model(), &a.u0, &a.h0, horizon, a.cfg.dt, 1)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let mut runs = Vec::new();
    for scale in [1.0, 0.5, 0.25] {
        let bs = a.with_data(blend(&a.u0, &b.u0, scale)?, blend(&a.h0, &b.h0, scale)?)?;
        runs.push(gap_run(a, &a_run, &bs, scale, horizon)?);
    }
    let control = {
        let bs = a.with_data(blend(&a.u0, &b.u0, 8.0)?, blend(&a.h0, &b.h0, 8.0)?)?;
        gap_run(a, &a_run, &bs, 8.0, horizon)?
    };
    let gaps: Vec<f64> = runs.iter().map(|r| r.trajectory_gap.unwrap_or(f64::INFINITY)).collect();
    let reductions: Vec<f64> = gaps
        .windows(2)
        .map(|w| if w[1] > 0.0 { w[0] / w[1] } else if w[0] > 0.0 { f64::INFINITY } else { 1.0 })
        .collect();
    let min_reduction = reductions.iter().copied().fold(f64::INFINITY, f64::min);
    let identical = gaps.iter().all(|g| *g == 0.0);
    Ok(DivergenceReport {
        horizon,
        passed: identical || min_reduction >= MIN_REDUCTION,
        runs,
        reductions,
        min_reduction,
        control,
    })
}
