//! Integrating-factor RK4 solvers for linear transport and transport-diffusion
//! equations, with evaluation of their a-priori estimates.
//!
//! The state is advanced in spectral space. With `E(tau) = exp(-nu |k|^2 tau)`
//! one step of the Lawson scheme reads
//!
//! ```text
//! k1 = N(t, w)
//! k2 = N(t + dt/2, E(dt/2) (w + dt/2 k1))
//! k3 = N(t + dt/2, E(dt/2) w + dt/2 k2)
//! k4 = N(t + dt,   E(dt) w + dt E(dt/2) k3)
//! w' = E(dt) w + dt/6 (E(dt) k1 + 2 E(dt/2) (k2 + k3) + k4)
//! ```
//!
//! where `N(t, f) = -P(v . grad f) + P g` and `P` is the dealias projection.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::besov::{lr_aggregate, lp_norm, weighted_ladder, BlockSeries, Exponent};
use crate::error::{Error, Result};
use crate::grid::{dealias, dft_forward, dft_inverse, jacobian, Field, Grid, SpectralField};
use crate::lab::{trial_rng, RandomFieldSpec};
use crate::partition::DyadicPartition;

/// Advective CFL safety factor.
pub const CFL_SAFETY: f64 = 0.5;

/// Offsets of the four RK stages within a step, in units of `dt`.
pub const STAGE_OFFSETS: [f64; 4] = [0.0, 0.5, 0.5, 1.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StagePoint {
    pub step: usize,
    pub stage: usize,
    pub t: f64,
}

/// Supplies a coefficient field at RK stage points.
pub trait FieldSampler: Sync {
    fn sample(&self, at: StagePoint) -> Result<Field>;

    fn describe(&self) -> String {
        "custom".into()
    }
}

pub struct Steady(pub Field);

impl FieldSampler for Steady {
    fn sample(&self, _: StagePoint) -> Result<Field> {
        Ok(self.0.clone())
    }

    fn describe(&self) -> String {
        "steady".into()
    }
}

/// Piecewise-linear interpolation between stored snapshots, clamped at the ends.
pub struct Interpolated {
    times: Vec<f64>,
    fields: Vec<Field>,
}

impl Interpolated {
    pub fn new(snapshots: &[(f64, Field)]) -> Result<Self> {
        if snapshots.is_empty() {
            return Err(Error::Precondition("interpolation needs at least one snapshot".into()));
        }
        Ok(Interpolated {
            times: snapshots.iter().map(|s| s.0).collect(),
            fields: snapshots.iter().map(|s| s.1.clone()).collect(),
        })
    }
}

impl FieldSampler for Interpolated {
    fn sample(&self, at: StagePoint) -> Result<Field> {
        let t = at.t;
        let last = self.times.len() - 1;
        if t <= self.times[0] {
            return Ok(self.fields[0].clone());
        }
        if t >= self.times[last] {
            return Ok(self.fields[last].clone());
        }
        let hi = self.times.partition_point(|&x| x < t);
        let lo = hi - 1;
        let w = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        self.fields[lo].linear_combination(1.0 - w, &self.fields[hi], w)
    }

    fn describe(&self) -> String {
        "linear-interpolation".into()
    }
}

/// Exact RK stage states recorded from an earlier solve with the same steps.
#[derive(Clone, Debug, Default)]
pub struct StageRecord {
    stages: Vec<[Option<Field>; 4]>,
}

impl StageRecord {
    pub fn record(&mut self, at: StagePoint, f: &Field) {
        if self.stages.len() <= at.step {
            self.stages.resize_with(at.step + 1, Default::default);
        }
        self.stages[at.step][at.stage] = Some(f.clone());
    }

    pub fn steps(&self) -> usize {
        self.stages.len()
    }
}

impl FieldSampler for StageRecord {
    fn sample(&self, at: StagePoint) -> Result<Field> {
        self.stages
            .get(at.step)
            .and_then(|s| s[at.stage].clone())
            .ok_or_else(|| {
                Error::Precondition(format!(
                    "no recorded stage state for step {} stage {}",
                    at.step, at.stage
                ))
            })
    }

    fn describe(&self) -> String {
        "stage-synchronous".into()
    }
}

pub struct FnSampler<F>(pub F);

impl<F: Fn(StagePoint) -> Result<Field> + Sync> FieldSampler for FnSampler<F> {
    fn sample(&self, at: StagePoint) -> Result<Field> {
        (self.0)(at)
    }
}

pub struct LinearProblem<'a> {
    pub initial: Field,
    pub velocity: &'a dyn FieldSampler,
    pub forcing: Option<&'a dyn FieldSampler>,
    pub nu: f64,
    pub horizon: f64,
    pub dt: f64,
    /// Store a snapshot every this many steps (the final state is always kept).
    pub snapshot_every: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub scheme: String,
    pub dt: f64,
    pub nu: f64,
    pub steps: usize,
    pub coefficient_sampling: String,
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub snapshots: Vec<(f64, Field)>,
    /// Step index of each snapshot.
    pub steps: Vec<usize>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn last(&self) -> &Field {
        &self.snapshots.last().expect("non-empty trajectory").1
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.0).collect()
    }
}

/// Number of steps and the adjusted step landing exactly on the horizon.
pub fn step_plan(horizon: f64, dt: f64) -> Result<(usize, f64)> {
    if !(dt > 0.0 && dt.is_finite()) || !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(Error::Config(format!(
            "need dt > 0 and horizon >= 0, got dt = {dt}, horizon = {horizon}"
        )));
    }
    if horizon == 0.0 {
        return Ok((0, dt));
    }
    let steps = ((horizon / dt) - 1e-9).ceil().max(1.0) as usize;
    Ok((steps, horizon / steps as f64))
}

/// `P(v . grad f)` componentwise for a band-limited velocity.
pub fn advection(v: &Field, f: &SpectralField) -> Result<SpectralField> {
    if v.components() != 2 {
        return Err(Error::SizeMismatch("velocity must have two components".into()));
    }
    let grid = *f.grid();
    let len = grid.len();
    let mut parts = Vec::with_capacity(f.components());
    for c in 0..f.components() {
        let comp = f.component(c);
        let d1 = dft_inverse(&comp.partial(0));
        let d2 = dft_inverse(&comp.partial(1));
        let (v1, v2) = (v.component_values(0), v.component_values(1));
        let values: Vec<f64> = (0..len)
            .map(|i| v1[i] * d1.values()[i] + v2[i] * d2.values()[i])
            .collect();
        parts.push(dft_forward(&Field::from_values(grid, 1, values)?).dealiased());
    }
    SpectralField::from_components(&parts)
}

/// Integrating-factor tables `E(dt/2)` and `E(dt)`.
pub fn integrating_factors(grid: &Grid, nu: f64, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let radii = grid.radii();
    let half = radii.iter().map(|k| (-nu * k * k * dt * 0.5).exp()).collect();
    let full = radii.iter().map(|k| (-nu * k * k * dt).exp()).collect();
    (half, full)
}

pub fn check_cfl(v: &Field, dt: f64, t: f64) -> Result<()> {
    let vmax = v.max_abs();
    if !vmax.is_finite() {
        return Err(Error::Divergence { t });
    }
    if vmax > 0.0 {
        let required = CFL_SAFETY * v.grid().spacing() / vmax;
        if dt > required {
            return Err(Error::Cfl { t, dt, required });
        }
    }
    Ok(())
}

/// Callback receiving every stage state in sample space.
pub type StageObserver<'o> = dyn FnMut(StagePoint, &Field) + 'o;

/// One Lawson step. `rhs` evaluates the nonlinearity at a stage.
pub(crate) fn lawson_step(
    w: &SpectralField,
    dt: f64,
    half: &[f64],
    full: &[f64],
    mut rhs: impl FnMut(usize, &SpectralField) -> Result<SpectralField>,
) -> Result<SpectralField> {
    let k1 = rhs(0, w)?;
    let mut s2 = w.clone();
    s2.axpy(0.5 * dt, &k1)?;
    let s2 = s2.multiplied(half);
    let k2 = rhs(1, &s2)?;
    let wh = w.multiplied(half);
    let mut s3 = wh.clone();
    s3.axpy(0.5 * dt, &k2)?;
    let k3 = rhs(2, &s3)?;
    let mut s4 = w.multiplied(full);
    s4.axpy(dt, &k3.multiplied(half))?;
    let k4 = rhs(3, &s4)?;
    let mut out = w.multiplied(full);
    out.axpy(dt / 6.0, &k1.multiplied(full))?;
    let mut mid = k2;
    mid.axpy(1.0, &k3)?;
    out.axpy(dt / 3.0, &mid.multiplied(half))?;
    out.axpy(dt / 6.0, &k4)?;
    Ok(out)
}

/// Solves `f_t + v . grad f - nu lap f = g` from band-limited initial data.
pub fn solve_linear(prob: &LinearProblem, mut observer: Option<&mut StageObserver>) -> Result<Trajectory> {
    if prob.nu < 0.0 || !prob.nu.is_finite() {
        return Err(Error::Config(format!("nu = {} must be >= 0", prob.nu)));
    }
    let (steps, dt) = step_plan(prob.horizon, prob.dt)?;
    let every = prob.snapshot_every.max(1);
    let grid = *prob.initial.grid();
    let (half, full) = integrating_factors(&grid, prob.nu, dt);
    let mut w = dft_forward(&prob.initial).dealiased();
    let mut snapshots = vec![(0.0, dft_inverse(&w))];
    let mut snap_steps = vec![0];
    for step in 0..steps {
        let t = step as f64 * dt;
        let rhs = |stage: usize, state: &SpectralField| -> Result<SpectralField> {
            let at = StagePoint {
                step,
                stage,
                t: t + STAGE_OFFSETS[stage] * dt,
            };
            if let Some(obs) = observer.as_deref_mut() {
                obs(at, &dft_inverse(state));
            }
            let v = dealias(&prob.velocity.sample(at)?);
            check_cfl(&v, dt, at.t)?;
            let mut out = advection(&v, state)?.scaled(-1.0);
            if let Some(g) = prob.forcing {
                out.axpy(1.0, &dft_forward(&g.sample(at)?).dealiased())?;
            }
            Ok(out)
        };
        w = lawson_step(&w, dt, &half, &full, rhs)?;
        if !w.is_finite() {
            return Err(Error::Divergence { t: t + dt });
        }
        if (step + 1) % every == 0 || step + 1 == steps {
            snapshots.push(((step + 1) as f64 * dt, dft_inverse(&w)));
            snap_steps.push(step + 1);
        }
    }
    Ok(Trajectory {
        snapshots,
        steps: snap_steps,
        meta: TrajectoryMeta {
            scheme: "integrating-factor-rk4".into(),
            dt,
            nu: prob.nu,
            steps,
            coefficient_sampling: prob.velocity.describe(),
        },
    })
}

pub fn solve_transport(prob: &LinearProblem) -> Result<Trajectory> {
    if prob.nu != 0.0 {
        return Err(Error::Config("pure transport requires nu = 0".into()));
    }
    solve_linear(prob, None)
}

pub fn solve_transport_diffusion(prob: &LinearProblem) -> Result<Trajectory> {
    if !(prob.nu > 0.0) {
        return Err(Error::Config("transport-diffusion requires nu > 0".into()));
    }
    solve_linear(prob, None)
}

/// Exact translation `f(x - c t)` of a field by a spectral phase shift.
pub fn translate(f: &Field, c: [f64; 2], t: f64) -> Field {
    let spec = dft_forward(f);
    let g = *f.grid();
    let n = g.n();
    let len = g.len();
    let mut coeffs = spec.coeffs().to_vec();
    for (idx, z) in coeffs.iter_mut().enumerate() {
        let i = idx % len;
        let (k1, k2) = (g.wavenumber(i % n), g.wavenumber(i / n));
        let phase = -(k1 * c[0] + k2 * c[1]) * t;
        *z *= Complex64::from_polar(1.0, phase);
    }
    dft_inverse(&SpectralField::from_coeffs(g, f.components(), coeffs).expect("sized"))
}

/// Which norm of `grad v` drives the transport estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VBranch {
    /// `||grad v||_{B^{s-1}_{p1,r}}`.
    Regular,
    /// `||grad v||_{B^{2/p1}_{p1,inf}} + ||grad v||_inf`.
    Critical,
    /// `||grad v||_{B^{2/p1}_{p1,1}}`.
    Endpoint,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportIndices {
    pub s: f64,
    pub p: Exponent,
    pub p1: Exponent,
    pub r: Exponent,
    pub div_free: bool,
}

impl TransportIndices {
    /// Lower admissible bound on `s`.
    pub fn threshold(&self) -> f64 {
        let m = self.p1.reciprocal().min(self.p.conjugate().reciprocal());
        if self.div_free {
            -1.0 - 2.0 * m
        } else {
            -2.0 * m
        }
    }

    /// Validates the index condition and picks the branch for `V'`.
    pub fn branch(&self) -> Result<VBranch> {
        if self.p > self.p1 {
            return Err(Error::Precondition(format!(
                "transport estimate requires p <= p1, got p = {}, p1 = {}",
                self.p, self.p1
            )));
        }
        let th = self.threshold();
        let finite_r = !self.r.is_infinite();
        if self.s < th || (finite_r && self.s == th) {
            return Err(Error::Precondition(format!(
                "index condition violated: s = {} must be {} {th} (s >= -2 min(1/p1, 1/p'){}, strict when r < inf)",
                self.s,
                if finite_r { ">" } else { ">=" },
                if self.div_free { " - 1 for divergence-free v" } else { "" }
            )));
        }
        if self.s == th {
            return Ok(VBranch::Endpoint);
        }
        let edge = 1.0 + 2.0 * self.p1.reciprocal();
        if self.s > edge || (self.s == edge && self.r.value() == 1.0) {
            Ok(VBranch::Regular)
        } else if self.s < edge {
            Ok(VBranch::Critical)
        } else {
            Err(Error::Precondition(format!(
                "s = 1 + 2/p1 = {edge} with r = {} > 1 has no admissible norm for grad v",
                self.r
            )))
        }
    }
}

/// `V'(t)` for one velocity sample.
pub fn v_prime(part: &DyadicPartition, v: &Field, idx: &TransportIndices, branch: VBranch) -> Result<f64> {
    let jac = jacobian(&dealias(v));
    let raw = crate::besov::block_lp_norms(part, &jac, idx.p1)?;
    let agg = |s: f64, r: Exponent| {
        let vals: Vec<f64> = weighted_ladder(&raw, s).into_iter().map(|x| x.1).collect();
        lr_aggregate(&vals, r)
    };
    let crit = 2.0 * idx.p1.reciprocal();
    Ok(match branch {
        VBranch::Regular => agg(idx.s - 1.0, idx.r),
        VBranch::Critical => agg(crit, Exponent::INFINITY) + jac.max_abs(),
        VBranch::Endpoint => agg(crit, Exponent::finite(1.0)),
    })
}

/// Cumulative trapezoid integral.
pub fn cumulative_trapezoid(times: &[f64], g: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; times.len()];
    for i in 1..times.len() {
        out[i] = out[i - 1] + 0.5 * (times[i] - times[i - 1]) * (g[i - 1] + g[i]);
    }
    out
}

/// Norm of the coefficient samples at the trajectory's snapshot times.
fn sample_at_snapshots(
    traj: &Trajectory,
    sampler: &dyn FieldSampler,
) -> Result<Vec<Field>> {
    traj.snapshots
        .iter()
        .zip(&traj.steps)
        .map(|((t, _), &step)| {
            // The final snapshot has no stage of its own; sample the end of the last step.
            let at = if step == traj.meta.steps && step > 0 {
                StagePoint { step: step - 1, stage: 3, t: *t }
            } else {
                StagePoint { step, stage: 0, t: *t }
            };
            sampler.sample(at)
        })
        .collect()
}

/// Constant-independent ingredients of the two transport estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimatePieces {
    pub kind: String,
    pub branch: VBranch,
    pub nu: f64,
    pub rho: Option<Exponent>,
    pub rho1: Option<Exponent>,
    pub times: Vec<f64>,
    pub lhs: Vec<f64>,
    pub initial_norm: f64,
    /// `||g(t)||_{B^s_{p,r}}` per snapshot (transport form only).
    pub forcing_norms: Vec<f64>,
    /// `||g||_{L~^rho1_t(B^{s-2+2/rho1}_{p,r})}` on each prefix (smoothing form only).
    pub forcing_prefix: Vec<f64>,
    pub v_accumulator: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransportEstimateReport {
    pub pieces: EstimatePieces,
    pub c0: f64,
    pub rhs: Vec<f64>,
    pub forcing_integral: f64,
    pub satisfied: bool,
    /// `min_t (rhs - lhs) / rhs`.
    pub slack: f64,
}

impl EstimatePieces {
    pub fn evaluate(&self, c0: f64) -> TransportEstimateReport {
        let n = self.times.len();
        let mut rhs = Vec::with_capacity(n);
        let forcing_integral;
        if self.kind == "transport" {
            let damped: Vec<f64> = (0..n)
                .map(|i| (-c0 * self.v_accumulator[i]).exp() * self.forcing_norms[i])
                .collect();
            let integral = cumulative_trapezoid(&self.times, &damped);
            for i in 0..n {
                rhs.push((self.initial_norm + integral[i]) * (c0 * self.v_accumulator[i]).exp());
            }
            forcing_integral = *integral.last().unwrap_or(&0.0);
        } else {
            let inv_rho = self.rho.map_or(0.0, |r| r.reciprocal());
            let inv_rho1 = self.rho1.map_or(1.0, |r| r.reciprocal());
            for i in 0..n {
                let grow = 1.0 + self.nu * self.times[i];
                let amp = c0 * (c0 * grow.powf(inv_rho) * self.v_accumulator[i]).exp();
                let data = grow.powf(inv_rho) * self.initial_norm
                    + grow.powf(1.0 + inv_rho - inv_rho1)
                        * self.nu.powf(inv_rho1 - 1.0)
                        * self.forcing_prefix[i];
                rhs.push(amp * data);
            }
            forcing_integral = *self.forcing_prefix.last().unwrap_or(&0.0);
        }
        let mut slack = f64::INFINITY;
        let mut satisfied = true;
        for (i, (l, r)) in self.lhs.iter().zip(&rhs).enumerate() {
            // Both sides agree at t = 0 for the transport form; slack is read on t > 0.
            if *r > 0.0 && (i > 0 || n == 1) {
                slack = slack.min((r - l) / r);
            } else if *r == 0.0 && *l > 0.0 {
                slack = f64::NEG_INFINITY;
            }
            // Relative roundoff allowance for lhs == rhs cases such as v = 0.
            if *l > r * (1.0 + 1e-12) {
                satisfied = false;
            }
        }
        TransportEstimateReport {
            pieces: self.clone(),
            c0,
            rhs,
            forcing_integral,
            satisfied,
            slack: if slack == f64::INFINITY { 0.0 } else { slack },
        }
    }
}

fn v_accumulator(
    part: &DyadicPartition,
    traj: &Trajectory,
    velocity: &dyn FieldSampler,
    idx: &TransportIndices,
    branch: VBranch,
) -> Result<Vec<f64>> {
    let vs = sample_at_snapshots(traj, velocity)?;
    let vp = vs
        .iter()
        .map(|v| v_prime(part, v, idx, branch))
        .collect::<Result<Vec<_>>>()?;
    Ok(cumulative_trapezoid(&traj.times(), &vp))
}

/// Transport estimate: `||f||_{L~^inf_t B^s} <= (||f0|| + int e^{-C0 V} ||g||) e^{C0 V(t)}`
/// at every snapshot time.
pub fn transport_estimate_pieces(
    part: &DyadicPartition,
    traj: &Trajectory,
    velocity: &dyn FieldSampler,
    forcing: Option<&dyn FieldSampler>,
    idx: &TransportIndices,
) -> Result<EstimatePieces> {
    let branch = idx.branch()?;
    let series = BlockSeries::from_trajectory(part, &traj.snapshots, idx.p)?;
    let mut running = vec![0.0; series.blocks[0].len()];
    let mut lhs = Vec::new();
    for row in &series.blocks {
        for (m, v) in running.iter_mut().zip(row) {
            *m = f64::max(*m, *v);
        }
        let vals: Vec<f64> = weighted_ladder(&running, idx.s).into_iter().map(|x| x.1).collect();
        lhs.push(lr_aggregate(&vals, idx.r));
    }
    let initial_norm = series.snapshot_norms(idx.s, idx.r)[0];
    let forcing_norms = match forcing {
        Some(g) => sample_at_snapshots(traj, g)?
            .iter()
            .map(|f| Ok(crate::besov::besov_norm(part, f, crate::besov::BesovParams { s: idx.s, p: idx.p, r: idx.r })?.total))
            .collect::<Result<Vec<_>>>()?,
        None => vec![0.0; traj.snapshots.len()],
    };
    Ok(EstimatePieces {
        kind: "transport".into(),
        branch,
        nu: traj.meta.nu,
        rho: None,
        rho1: None,
        times: traj.times(),
        lhs,
        initial_norm,
        forcing_norms,
        forcing_prefix: Vec::new(),
        v_accumulator: v_accumulator(part, traj, velocity, idx, branch)?,
    })
}

pub fn check_transport_estimate(
    part: &DyadicPartition,
    traj: &Trajectory,
    velocity: &dyn FieldSampler,
    forcing: Option<&dyn FieldSampler>,
    idx: &TransportIndices,
    c0: f64,
) -> Result<TransportEstimateReport> {
    Ok(transport_estimate_pieces(part, traj, velocity, forcing, idx)?.evaluate(c0))
}

/// Chemin-Lerner norm of every time prefix of a block series.
fn prefix_chemin_lerner(series: &BlockSeries, rho: Exponent, s: f64, r: Exponent) -> Vec<f64> {
    let nb = series.blocks[0].len();
    let n = series.times.len();
    let mut acc = vec![0.0; nb];
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        for b in 0..nb {
            let g = series.blocks[i][b];
            if rho.is_infinite() {
                acc[b] = f64::max(acc[b], g);
            } else if i > 0 {
                let q = rho.value();
                let dt = series.times[i] - series.times[i - 1];
                acc[b] += 0.5 * dt * (series.blocks[i - 1][b].powf(q) + g.powf(q));
            }
        }
        let raw: Vec<f64> = if rho.is_infinite() {
            acc.clone()
        } else {
            acc.iter().map(|a| a.powf(1.0 / rho.value())).collect()
        };
        let vals: Vec<f64> = weighted_ladder(&raw, s).into_iter().map(|x| x.1).collect();
        out.push(lr_aggregate(&vals, r));
    }
    out
}

/// Smoothing estimate for transport-diffusion with exponents `rho1 <= rho`.
#[allow(clippy::too_many_arguments)]
pub fn smoothing_estimate_pieces(
    part: &DyadicPartition,
    traj: &Trajectory,
    velocity: &dyn FieldSampler,
    forcing: Option<&dyn FieldSampler>,
    idx: &TransportIndices,
    rho: Exponent,
    rho1: Exponent,
) -> Result<EstimatePieces> {
    if rho1 > rho {
        return Err(Error::Precondition(format!(
            "smoothing estimate requires 1 <= rho1 <= rho, got rho1 = {rho1}, rho = {rho}"
        )));
    }
    let nu = traj.meta.nu;
    if !(nu > 0.0) {
        return Err(Error::Precondition("smoothing estimate requires nu > 0".into()));
    }
    let branch = idx.branch()?;
    let series = BlockSeries::from_trajectory(part, &traj.snapshots, idx.p)?;
    let inv_rho = rho.reciprocal();
    let lhs: Vec<f64> = prefix_chemin_lerner(&series, rho, idx.s + 2.0 * inv_rho, idx.r)
        .into_iter()
        .map(|v| nu.powf(inv_rho) * v)
        .collect();
    let initial_norm = series.snapshot_norms(idx.s, idx.r)[0];
    let forcing_prefix = match forcing {
        Some(g) => {
            let samples: Vec<(f64, Field)> = traj.times().into_iter().zip(sample_at_snapshots(traj, g)?).collect();
            let gs = BlockSeries::from_trajectory(part, &samples, idx.p)?;
            prefix_chemin_lerner(&gs, rho1, idx.s - 2.0 + 2.0 * rho1.reciprocal(), idx.r)
        }
        None => vec![0.0; traj.snapshots.len()],
    };
    Ok(EstimatePieces {
        kind: "smoothing".into(),
        branch,
        nu,
        rho: Some(rho),
        rho1: Some(rho1),
        times: traj.times(),
        lhs,
        initial_norm,
        forcing_norms: Vec::new(),
        forcing_prefix,
        v_accumulator: v_accumulator(part, traj, velocity, idx, branch)?,
    })
}

#[allow(clippy::too_many_arguments)]
pub fn check_smoothing_estimate(
    part: &DyadicPartition,
    traj: &Trajectory,
    velocity: &dyn FieldSampler,
    forcing: Option<&dyn FieldSampler>,
    idx: &TransportIndices,
    rho: Exponent,
    rho1: Exponent,
    c0: f64,
) -> Result<TransportEstimateReport> {
    Ok(smoothing_estimate_pieces(part, traj, velocity, forcing, idx, rho, rho1)?.evaluate(c0))
}

/// Smallest `C0 >= 1` satisfying every estimate, by bisection.
pub fn calibrate_c0(pieces: &[EstimatePieces]) -> Result<f64> {
    let ok = |c: f64| pieces.iter().all(|p| p.evaluate(c).satisfied);
    if ok(1.0) {
        return Ok(1.0);
    }
    let mut hi = 2.0;
    while !ok(hi) {
        hi *= 2.0;
        if hi > 1e6 {
            return Err(Error::Precondition(
                "no constant up to 1e6 satisfies the calibration ensemble".into(),
            ));
        }
    }
    let mut lo = hi / 2.0;
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// The shear velocity `(A sin(2 pi x2 / L), 0)`.
pub fn shear_velocity(grid: Grid, amplitude: f64) -> Field {
    let w = 2.0 * std::f64::consts::PI / grid.length();
    let v1 = Field::from_fn(grid, |_, x2| amplitude * (w * x2).sin());
    Field::from_components(&[v1, Field::zeros(grid, 1)]).expect("same grid")
}

/// One member of a shear-flow ensemble.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShearCase {
    pub seed: u64,
    pub amplitude: f64,
    pub nu: f64,
    pub horizon: f64,
    pub dt: f64,
    pub data: RandomFieldSpec,
}

impl ShearCase {
    /// Ensemble member `index`: amplitude in [0.5, 1.5] and random initial data.
    pub fn member(master: u64, index: u64, nu: f64) -> Self {
        let mut rng = trial_rng(master, index);
        ShearCase {
            seed: master,
            amplitude: 0.5 + rng.random::<f64>(),
            nu,
            horizon: 1.5,
            dt: 0.02,
            data: RandomFieldSpec {
                seed: rng.random(),
                ..Default::default()
            },
        }
    }

    pub fn run(&self, part: &DyadicPartition) -> Result<(Trajectory, Steady)> {
        let grid = *part.grid();
        let v = Steady(shear_velocity(grid, self.amplitude));
        let f0 = self.data.sample(part, 1, &mut trial_rng(self.data.seed, 0));
        let prob = LinearProblem {
            initial: f0,
            velocity: &v,
            forcing: None,
            nu: self.nu,
            horizon: self.horizon,
            dt: self.dt,
            snapshot_every: 1,
        };
        let traj = solve_linear(&prob, None)?;
        Ok((traj, v))
    }
}

/// `||f||_{L^2}` of the difference of two fields.
pub fn l2_distance(a: &Field, b: &Field) -> Result<f64> {
    Ok(lp_norm(&a.sub(b)?, Exponent::finite(2.0)))
}
