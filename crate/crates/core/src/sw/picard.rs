//! Successive approximations on the contraction window.
//!
//! Iterate 1 is the truncated data `S_2(u0, h0)` held constant in time.
//! Iterate `n + 1` solves the linear problems with coefficients taken from
//! iterate `n` and data `S_{n+2}(u0, h0)`. Every solve shares one step
//! sequence, and coefficients are read at the stage states recorded while
//! computing iterate `n`, so the limit of the scheme is exactly the coupled
//! integrator's solution.

use serde::{Deserialize, Serialize};

use crate::besov::{BlockSeries, Exponent};
use crate::calibration::Constants;
use crate::error::{Error, Result};
use crate::grid::{dealias, dft_forward, dft_inverse, Field, SpectralField};
use crate::linear::{lawson_step, STAGE_OFFSETS};
use crate::partition::DyadicPartition;

use super::budget::{compute_budgets, IterationBudget};
use super::model::{check_state, coupled_factors, integrate, join, split, Frozen, SwModel};
use super::Setup;

/// Relative size below which a difference norm is treated as roundoff.
const ROUNDOFF: f64 = 1e-12;
/// Allowed ratio between the iterate-to-direct gap and the last difference norm.
pub const GAP_FACTOR: f64 = 10.0;
/// Largest fitted ratio accepted as a contraction.
pub const Q_MAX: f64 = 0.75;

/// `S_{n+2}(u0, h0)`, the data of iterate `n + 1`.
pub fn initial_truncation(setup: &Setup, n: i32) -> Result<(Field, Field)> {
    if n < 0 {
        return Err(Error::OutOfRange(format!("iterate index n = {n} must be >= 0")));
    }
    let cut = |f: &Field| -> Result<Field> {
        Ok(dft_inverse(&setup.part.cutoff_spectral(n + 2, &dft_forward(f).dealiased())?))
    };
    Ok((cut(&setup.u0)?, cut(&setup.h0)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateNorms {
    /// `||u_n||_{L~^inf_T B^s}`.
    pub u_linf: f64,
    /// `||u_n||_{L~^2_T B^{s+1}}`.
    pub u_l2: f64,
    /// `||h_n||_{L~^inf_T B^s}`.
    pub h_linf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterateRecord {
    pub n: usize,
    pub norms: IterateNorms,
    /// Norms within `(E1, E1, E2)`.
    pub member: bool,
    /// `delta_n` and its three parts, from `n = 2`.
    pub delta: Option<f64>,
    pub delta_parts: Option<[f64; 3]>,
    /// Largest `B^{s-2}` residual of the full system at interior times.
    pub residual: f64,
    pub min_height: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationReport {
    pub budget: IterationBudget,
    pub window: f64,
    pub dt: f64,
    pub steps: usize,
    pub coefficient_sampling: String,
    pub iterates: Vec<IterateRecord>,
    pub all_members: bool,
    /// Fitted geometric ratio of `delta_n`; zero when nothing exceeds roundoff.
    pub q: f64,
    pub q_points: usize,
    pub contraction: bool,
    pub roundoff_floor: f64,
    /// `||u_N - u_direct||_{L~^inf_T B^{s-1}}`.
    pub direct_gap: f64,
    pub gap_bound: f64,
    pub gap_ok: bool,
}

/// Report plus stored trajectories of every iterate.
#[derive(Clone, Debug)]
pub struct IterationRun {
    pub report: IterationReport,
    pub times: Vec<f64>,
    /// `u[n - 1]` holds the snapshots of iterate `n`.
    pub u: Vec<Vec<Field>>,
    pub h: Vec<Vec<Field>>,
}

struct Iterate {
    /// `stages[step][stage]`; empty for the frozen first iterate.
    stages: Vec<[SpectralField; 4]>,
    first: SpectralField,
    snapshots: Vec<SpectralField>,
    min_height: f64,
}

impl Iterate {
    fn at(&self, step: usize, stage: usize) -> &SpectralField {
        if self.stages.is_empty() {
            &self.first
        } else {
            &self.stages[step][stage]
        }
    }
}

fn next_iterate(
    model: &SwModel,
    prev: &Iterate,
    w0: SpectralField,
    steps: usize,
    dt: f64,
    tables: &(Vec<f64>, Vec<f64>),
) -> Result<Iterate> {
    let mut w = w0;
    let mut stages = Vec::with_capacity(steps);
    let mut snapshots = vec![w.clone()];
    let mut min_height = f64::INFINITY;
    for step in 0..steps {
        let t = step as f64 * dt;
        let mut frozen: Vec<Frozen> = Vec::with_capacity(4);
        for stage in 0..4 {
            let f = model.frozen(prev.at(step, stage))?;
            let h = dft_inverse(&prev.at(step, stage).component(2));
            check_state(&f.u, &h, dt, t + STAGE_OFFSETS[stage] * dt)?;
            frozen.push(f);
        }
        let mut rec: Vec<SpectralField> = Vec::with_capacity(4);
        w = lawson_step(&w, dt, &tables.0, &tables.1, |stage, state| {
            rec.push(state.clone());
            model.picard_rhs(&frozen[stage], state)
        })?;
        if !w.is_finite() {
            return Err(Error::Divergence { t: t + dt });
        }
        for s in &rec {
            min_height = min_height.min(1.0 + dft_inverse(&s.component(2)).min_value());
        }
        let rec: [SpectralField; 4] = rec.try_into().map_err(|_| Error::Precondition("missing stage".into()))?;
        stages.push(rec);
        snapshots.push(w.clone());
    }
    Ok(Iterate {
        first: snapshots[0].clone(),
        stages,
        snapshots,
        min_height,
    })
}

fn physical(snaps: &[SpectralField]) -> Result<(Vec<Field>, Vec<Field>)> {
    let mut us = Vec::with_capacity(snaps.len());
    let mut hs = Vec::with_capacity(snaps.len());
    for w in snaps {
        let (u, h) = split(w)?;
        us.push(dft_inverse(&u));
        hs.push(dft_inverse(&h));
    }
    Ok((us, hs))
}

fn series(part: &DyadicPartition, times: &[f64], fields: &[Field], p: Exponent) -> Result<BlockSeries> {
    let traj: Vec<(f64, Field)> = times.iter().copied().zip(fields.iter().cloned()).collect();
    BlockSeries::from_trajectory(part, &traj, p)
}

/// Differences of band-limited fields, projected so roundoff stays in the band.
fn differences(a: &[Field], b: &[Field]) -> Result<Vec<Field>> {
    a.iter().zip(b).map(|(x, y)| Ok(dealias(&x.sub(y)?))).collect()
}

/// Largest `B^{s-2}` residual of the coupled system by centred differences in time.
fn residual(
    model: &SwModel,
    setup: &Setup,
    snaps: &[SpectralField],
    dt: f64,
) -> Result<f64> {
    let params = setup.cfg.params().with_s(setup.cfg.s - 2.0);
    let mut worst: f64 = 0.0;
    for i in 1..snaps.len().saturating_sub(1) {
        let mut r = snaps[i + 1].clone();
        r.axpy(-1.0, &snaps[i - 1])?;
        let mut r = r.scaled(0.5 / dt);
        r.axpy(-1.0, &model.full_tendency(&snaps[i])?)?;
        let (ru, rh) = split(&r)?;
        let nu = crate::besov::besov_norm(&setup.part, &dft_inverse(&ru), params)?.total;
        let nh = crate::besov::besov_norm(&setup.part, &dft_inverse(&rh), params)?.total;
        worst = worst.max(nu + nh);
    }
    Ok(worst)
}

/// Least-squares slope of `ln delta_n` against `n`, returned as `exp(slope)`.
/// Values at or below `floor` end the sequence; the first of them enters
/// the fit clamped to `floor`, so the estimate stays an upper bound on the
/// decay actually seen.
pub fn fit_ratio(deltas: &[(usize, f64)], floor: f64) -> (f64, usize) {
    let mut pts: Vec<(f64, f64)> = Vec::new();
    for &(n, d) in deltas {
        if d > floor {
            pts.push((n as f64, d.ln()));
        } else {
            if !pts.is_empty() && floor > 0.0 {
                pts.push((n as f64, floor.ln()));
            }
            break;
        }
    }
    if pts.len() < 2 {
        return (0.0, pts.len());
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    ((sxy / sxx).exp(), pts.len())
}

pub fn run_iteration(setup: &Setup, constants: &Constants) -> Result<IterationRun> {
    let cfg = &setup.cfg;
    let budget = compute_budgets(setup, constants)?;
    let model = cfg.model();
    let window = budget.t2;
    let steps = ((window / cfg.dt).ceil() as usize).max(8);
    let dt = window / steps as f64;
    let times: Vec<f64> = (0..=steps).map(|i| i as f64 * dt).collect();
    let tables = coupled_factors(setup.part.grid(), cfg.nu, dt);
    let (p, r, s) = (cfg.p, cfg.r, cfg.s);
    let part = &setup.part;
    let inf = Exponent::INFINITY;
    let two = Exponent::finite(2.0);
    let floor = ROUNDOFF * (setup.u0_norm + setup.h0_norm);

    let (u1, h1) = initial_truncation(setup, 0)?;
    let w1 = join(&dft_forward(&u1), &dft_forward(&h1))?;
    let mut current = Iterate {
        stages: Vec::new(),
        first: w1.clone(),
        snapshots: vec![w1; steps + 1],
        min_height: 1.0 + h1.min_value(),
    };
    let mut all_u: Vec<Vec<Field>> = Vec::new();
    let mut all_h: Vec<Vec<Field>> = Vec::new();
    let mut records = Vec::new();
    for n in 1..=cfg.n_iters {
        if n > 1 {
            let (u0n, h0n) = initial_truncation(setup, n as i32 - 1)?;
            let w0 = join(&dft_forward(&u0n), &dft_forward(&h0n))?;
            current = next_iterate(&model, &current, w0, steps, dt, &tables)?;
        }
        let (us, hs) = physical(&current.snapshots)?;
        let su = series(part, &times, &us, p)?;
        let sh = series(part, &times, &hs, p)?;
        let norms = IterateNorms {
            u_linf: su.chemin_lerner(inf, s, r).total,
            u_l2: su.chemin_lerner(two, s + 1.0, r).total,
            h_linf: sh.chemin_lerner(inf, s, r).total,
        };
        let member = norms.u_linf <= budget.e1 && norms.u_l2 <= budget.e1 && norms.h_linf <= budget.e2;
        let (delta, delta_parts) = match (all_u.last(), all_h.last()) {
            (Some(pu), Some(ph)) => {
                let du = series(part, &times, &differences(&us, pu)?, p)?;
                let dh = series(part, &times, &differences(&hs, ph)?, p)?;
                let parts = [
                    du.chemin_lerner(inf, s - 1.0, r).total,
                    du.chemin_lerner(two, s, r).total,
                    dh.chemin_lerner(inf, s - 1.0, r).total,
                ];
                (Some(parts.iter().sum()), Some(parts))
            }
            _ => (None, None),
        };
        records.push(IterateRecord {
            n,
            norms,
            member,
            delta,
            delta_parts,
            residual: residual(&model, setup, &current.snapshots, dt)?,
            min_height: current.min_height,
        });
        all_u.push(us);
        all_h.push(hs);
    }

    let deltas: Vec<(usize, f64)> = records.iter().filter_map(|r| r.delta.map(|d| (r.n, d))).collect();
    let (q, q_points) = fit_ratio(&deltas, floor);

    let (direct, failure) = integrate(&model, &setup.u0, &setup.h0, window, dt, 1)?;
    if let Some(e) = failure {
        return Err(e);
    }
    let last_u = all_u.last().expect("at least two iterates");
    let gap = series(
        part,
        &times,
        &differences(last_u, &direct.u.snapshots.iter().map(|x| x.1.clone()).collect::<Vec<_>>())?,
        p,
    )?
    .chemin_lerner(inf, s - 1.0, r)
    .total;
    let last_delta = deltas.last().map(|d| d.1).unwrap_or(0.0);
    let gap_bound = GAP_FACTOR * last_delta.max(floor);
    let report = IterationReport {
        all_members: records.iter().all(|r| r.member),
        budget,
        window,
        dt,
        steps,
        coefficient_sampling: "stage-synchronous".into(),
        iterates: records,
        q,
        q_points,
        contraction: q <= Q_MAX,
        roundoff_floor: floor,
        direct_gap: gap,
        gap_bound,
        gap_ok: gap <= gap_bound,
    };
    Ok(IterationRun {
        report,
        times,
        u: all_u,
        h: all_h,
    })
}
