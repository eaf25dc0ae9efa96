//! Right-hand sides of the coupled system and the direct solver.
//!
//! States are three-component spectra `(u1, u2, h)` kept inside the
//! dealiasing band. Diffusion acts on the velocity only and is integrated
//! exactly by the Lawson factors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{dealias, dft_forward, dft_inverse, product_spectral, Field, Grid, SpectralField};
use crate::linear::{advection, lawson_step, step_plan, Trajectory, TrajectoryMeta, CFL_SAFETY, STAGE_OFFSETS};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwModel {
    pub nu: f64,
    /// Factor of `grad h` on the right side of the momentum equation.
    pub sign: f64,
}

/// Physical velocity and the coefficient-only forcing of a frozen iterate.
pub(crate) struct Frozen {
    pub u: Field,
    pub forcing: SpectralField,
}

pub(crate) fn join(u: &SpectralField, h: &SpectralField) -> Result<SpectralField> {
    SpectralField::from_components(&[u.component(0), u.component(1), h.clone()])
}

pub(crate) fn split(w: &SpectralField) -> Result<(SpectralField, SpectralField)> {
    Ok((
        SpectralField::from_components(&[w.component(0), w.component(1)])?,
        w.component(2),
    ))
}

pub(crate) fn state_spectrum(u: &Field, h: &Field) -> Result<SpectralField> {
    join(&dft_forward(u).dealiased(), &dft_forward(h).dealiased())
}

/// Lawson tables with diffusion on the two velocity components only.
pub(crate) fn coupled_factors(grid: &Grid, nu: f64, dt: f64) -> (Vec<f64>, Vec<f64>) {
    let (half, full) = crate::linear::integrating_factors(grid, nu, dt);
    let ones = vec![1.0; grid.len()];
    let stack = |t: &[f64]| [t, t, &ones[..]].concat();
    (stack(&half), stack(&full))
}

/// Checks the height regime `1 + h >= 1/2` and the advective-plus-wave CFL bound.
pub(crate) fn check_state(u: &Field, h: &Field, dt: f64, t: f64) -> Result<f64> {
    if !(u.is_finite() && h.is_finite()) {
        return Err(Error::Divergence { t });
    }
    let min_height = 1.0 + h.min_value();
    if min_height < 0.5 {
        return Err(Error::RegimeExit { t, min_height });
    }
    let hmax = h.values().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let speed = u.max_abs() + (1.0 + hmax).sqrt();
    let spacing = u.grid().spacing();
    let courant = dt * speed / spacing;
    if courant > CFL_SAFETY {
        return Err(Error::Cfl {
            t,
            dt,
            required: CFL_SAFETY * spacing / speed,
        });
    }
    Ok(courant)
}

/// `P(G P(1 / (1 + h)))` with `G^i = P(sum_k d_k h d_k u^i)`.
fn coupling_spec(u_spec: &SpectralField, h_phys: &Field, h_spec: &SpectralField) -> Result<SpectralField> {
    let dh = [dft_inverse(&h_spec.partial(0)), dft_inverse(&h_spec.partial(1))];
    let inv = {
        let vals = h_phys.values().iter().map(|h| 1.0 / (1.0 + h)).collect();
        dealias(&Field::from_values(*h_phys.grid(), 1, vals)?)
    };
    let mut parts = Vec::with_capacity(2);
    for i in 0..2 {
        let ui = u_spec.component(i);
        let d1 = dft_inverse(&ui.partial(0));
        let d2 = dft_inverse(&ui.partial(1));
        let vals = (0..d1.values().len())
            .map(|x| dh[0].values()[x] * d1.values()[x] + dh[1].values()[x] * d2.values()[x])
            .collect();
        let g = dealias(&Field::from_values(*h_phys.grid(), 1, vals)?);
        parts.push(product_spectral(&g, &inv)?);
    }
    SpectralField::from_components(&parts)
}

/// The momentum coupling `(grad h grad u) / (1 + h)` of band-limited fields,
/// projected onto the band.
pub fn momentum_coupling(u: &Field, h: &Field) -> Result<Field> {
    let u_spec = dft_forward(u).dealiased();
    let h_spec = dft_forward(h).dealiased();
    Ok(dft_inverse(&coupling_spec(&u_spec, &dft_inverse(&h_spec), &h_spec)?))
}

impl SwModel {
    /// Forcing of the next iterate from a frozen state `w`:
    /// `(nu C(u, h) + sign grad h, -div u - P(h div u))`.
    pub(crate) fn frozen(&self, w: &SpectralField) -> Result<Frozen> {
        let (us, hs) = split(w)?;
        let u = dft_inverse(&us);
        let h = dft_inverse(&hs);
        let mut fu = coupling_spec(&us, &h, &hs)?.scaled(self.nu);
        fu.axpy(self.sign, &hs.gradient()?)?;
        let div = us.divergence()?;
        let mut fh = product_spectral(&h, &dft_inverse(&div))?.scaled(-1.0);
        fh.axpy(-1.0, &div)?;
        Ok(Frozen {
            u,
            forcing: join(&fu, &fh)?,
        })
    }

    /// Right side of the next iterate's equations at state `state`.
    pub(crate) fn picard_rhs(&self, frozen: &Frozen, state: &SpectralField) -> Result<SpectralField> {
        let mut out = advection(&frozen.u, state)?.scaled(-1.0);
        out.axpy(1.0, &frozen.forcing)?;
        Ok(out)
    }

    /// Full nonlinear tendency except diffusion, with the mass flux in divergence form.
    pub(crate) fn tendency(&self, w: &SpectralField, u: &Field, h: &Field) -> Result<SpectralField> {
        let (us, hs) = split(w)?;
        let mut fu = advection(u, &us)?.scaled(-1.0);
        fu.axpy(self.nu, &coupling_spec(&us, h, &hs)?)?;
        fu.axpy(self.sign, &hs.gradient()?)?;
        let mut flux = product_spectral(h, u)?;
        flux.axpy(1.0, &us)?;
        let fh = flux.divergence()?.scaled(-1.0);
        join(&fu, &fh)
    }

    /// Tendency including diffusion, `d/dt` of the state.
    pub(crate) fn full_tendency(&self, w: &SpectralField) -> Result<SpectralField> {
        let (us, hs) = split(w)?;
        let u = dft_inverse(&us);
        let h = dft_inverse(&hs);
        let mut out = self.tendency(w, &u, &h)?;
        let lap = join(&us.laplacian(), &SpectralField::zeros(*w.grid(), 1))?;
        out.axpy(self.nu, &lap)?;
        Ok(out)
    }
}

#[derive(Clone, Debug)]
pub struct DirectRun {
    pub u: Trajectory,
    pub h: Trajectory,
    /// `int h dx` at each stored time.
    pub mass: Vec<f64>,
    pub min_height: f64,
    pub max_courant: f64,
}

impl DirectRun {
    /// Mass change relative to `int |h0| dx` (or absolute when that vanishes).
    pub fn relative_mass_drift(&self) -> f64 {
        let h0 = &self.h.snapshots[0].1;
        let scale = h0.values().iter().map(|v| v.abs()).sum::<f64>() * h0.grid().spacing().powi(2);
        let drift = self
            .mass
            .iter()
            .map(|m| (m - self.mass[0]).abs())
            .fold(0.0, f64::max);
        if scale > 0.0 {
            drift / scale
        } else {
            drift
        }
    }
}

/// Integrates the coupled system, returning what was computed before any
/// failure together with that failure.
pub(crate) fn integrate(
    model: &SwModel,
    u0: &Field,
    h0: &Field,
    horizon: f64,
    dt: f64,
    snapshot_every: usize,
) -> Result<(DirectRun, Option<Error>)> {
    if u0.components() != 2 || h0.components() != 1 {
        return Err(Error::SizeMismatch("need a two-component velocity and a scalar height".into()));
    }
    u0.grid().ensure_same(h0.grid())?;
    let (steps, dt) = step_plan(horizon, dt)?;
    let every = snapshot_every.max(1);
    let grid = *u0.grid();
    let (half, full) = coupled_factors(&grid, model.nu, dt);
    let mut w = state_spectrum(u0, h0)?;
    let meta = TrajectoryMeta {
        scheme: "integrating-factor-rk4".into(),
        dt,
        nu: model.nu,
        steps,
        coefficient_sampling: "coupled".into(),
    };
    let mut run = DirectRun {
        u: Trajectory {
            snapshots: Vec::new(),
            steps: Vec::new(),
            meta: meta.clone(),
        },
        h: Trajectory {
            snapshots: Vec::new(),
            steps: Vec::new(),
            meta,
        },
        mass: Vec::new(),
        min_height: f64::INFINITY,
        max_courant: 0.0,
    };
    let store = |run: &mut DirectRun, t: f64, step: usize, w: &SpectralField| -> Result<()> {
        let (us, hs) = split(w)?;
        let h = dft_inverse(&hs);
        run.mass.push(hs.coeffs()[0].re * grid.length() * grid.length());
        run.min_height = run.min_height.min(1.0 + h.min_value());
        run.u.snapshots.push((t, dft_inverse(&us)));
        run.u.steps.push(step);
        run.h.snapshots.push((t, h));
        run.h.steps.push(step);
        Ok(())
    };
    store(&mut run, 0.0, 0, &w)?;
    for step in 0..steps {
        let t = step as f64 * dt;
        let mut courant: f64 = 0.0;
        let rhs = |stage: usize, state: &SpectralField| -> Result<SpectralField> {
            let (us, hs) = split(state)?;
            let u = dft_inverse(&us);
            let h = dft_inverse(&hs);
            courant = courant.max(check_state(&u, &h, dt, t + STAGE_OFFSETS[stage] * dt)?);
            model.tendency(state, &u, &h)
        };
        match lawson_step(&w, dt, &half, &full, rhs) {
            Ok(next) => w = next,
            Err(e) => return Ok((run, Some(e))),
        }
        run.max_courant = run.max_courant.max(courant);
        if !w.is_finite() {
            return Ok((run, Some(Error::Divergence { t: t + dt })));
        }
        if (step + 1) % every == 0 || step + 1 == steps {
            store(&mut run, (step + 1) as f64 * dt, step + 1, &w)?;
        }
    }
    Ok((run, None))
}

/// Pseudo-spectral integrating-factor RK4 solve of the coupled system.
pub fn direct_solve(
    model: &SwModel,
    u0: &Field,
    h0: &Field,
    horizon: f64,
    dt: f64,
    snapshot_every: usize,
) -> Result<DirectRun> {
    match integrate(model, u0, h0, horizon, dt, snapshot_every)? {
        (run, None) => Ok(run),
        (_, Some(e)) => Err(e),
    }
}

/// Direct solve of a prepared run that keeps the states computed before a
/// failure, returned alongside it.
pub fn integrate_partial(
    setup: &super::Setup,
    horizon: f64,
    snapshot_every: usize,
) -> Result<(DirectRun, Option<Error>)> {
    let cfg = &setup.cfg;
    integrate(&cfg.model(), &setup.u0, &setup.h0, horizon, cfg.dt, snapshot_every)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lab::{trial_rng, RandomFieldSpec};
    use crate::partition::build_partition;
    use std::f64::consts::PI;

    fn grid() -> Grid {
        Grid::new(32, 8.0 * PI).unwrap()
    }

    const MODEL: SwModel = SwModel { nu: 0.5, sign: -1.0 };

    #[test]
    fn zero_data_stays_zero() {
        let g = grid();
        let run = direct_solve(&MODEL, &Field::zeros(g, 2), &Field::zeros(g, 1), 0.5, 0.05, 1).unwrap();
        for (_, f) in run.u.snapshots.iter().chain(&run.h.snapshots) {
            assert_eq!(f.max_abs(), 0.0);
        }
    }

    #[test]
    fn rest_state_is_steady() {
        let g = grid();
        let h0 = Field::constant(g, 0.1);
        let run = direct_solve(&MODEL, &Field::zeros(g, 2), &h0, 0.5, 0.05, 1).unwrap();
        let last = &run.h.snapshots.last().unwrap().1;
        assert!(last.sub(&h0).unwrap().max_abs() < 1e-15);
        assert_eq!(run.u.last().max_abs(), 0.0);
    }

    #[test]
    fn coupling_matches_pointwise_formula() {
        // One-dimensional data: h = a cos(kx), u = (b sin(kx), 0).
        let g = grid();
        let k = g.dk();
        let (a, b) = (0.1, 0.2);
        let h = Field::from_fn(g, |x, _| a * (k * x).cos());
        let u = Field::from_components(&[Field::from_fn(g, |x, _| b * (k * x).sin()), Field::zeros(g, 1)]).unwrap();
        let c = momentum_coupling(&u, &h).unwrap();
        let exact = Field::from_fn(g, |x, _| {
            -a * b * k * k * (k * x).sin() * (k * x).cos() / (1.0 + a * (k * x).cos())
        });
        // The exact coupling is not band-limited; compare inside the band.
        let diff = dealias(&exact).sub(&c.component(0)).unwrap().max_abs();
        assert!(diff < 1e-12, "{diff}");
        assert_eq!(c.component(1).max_abs(), 0.0);
    }

    #[test]
    fn mass_is_conserved() {
        let part = build_partition(grid()).unwrap();
        let spec = RandomFieldSpec {
            amplitude: 0.02,
            ..Default::default()
        };
        let u0 = spec.sample(&part, 2, &mut trial_rng(3, 0));
        let h0 = spec.sample(&part, 1, &mut trial_rng(3, 1));
        let run = direct_solve(&MODEL, &u0, &h0, 1.0, 0.05, 4).unwrap();
        assert!(run.relative_mass_drift() < 1e-12);
        assert!(run.min_height > 0.9);
    }

    #[test]
    fn regime_exit_is_reported() {
        let g = grid();
        let k = g.dk();
        let h0 = Field::from_fn(g, |x, _| -0.45 * (k * x).cos());
        let u0 = Field::from_components(&[Field::from_fn(g, |x, _| 0.9 * (k * x).sin()), Field::zeros(g, 1)]).unwrap();
        let res = direct_solve(&MODEL, &u0, &h0, 4.0, 0.02, 1);
        assert!(matches!(res, Err(Error::RegimeExit { .. })), "{res:?}");
    }
}
