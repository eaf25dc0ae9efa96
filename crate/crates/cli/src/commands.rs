//! Subcommand implementations.

use std::fs;
use std::path::{Path, PathBuf};

use besov_sw::besov::{besov_norm, chemin_lerner_norm, lp_norm, BesovParams, BlockSeries, Exponent};
use besov_sw::calibration::{calibrate, CalibrationPlan, Constants};
use besov_sw::io::{
    atomic_write, read_field, read_report, read_trajectory, series_csv, write_field, write_report,
    write_trajectory,
};
use besov_sw::lab::{LabCheck, RandomFieldSpec};
use besov_sw::linear::{
    check_smoothing_estimate, check_transport_estimate, shear_velocity, solve_transport,
    solve_transport_diffusion, LinearProblem, Steady, TransportEstimateReport, TransportIndices,
};
use besov_sw::partition::{build_partition, partition_rows};
use besov_sw::sw::{global_run, integrate_partial, run_iteration, Setup, SwConfig};
use besov_sw::{DyadicPartition, Field, Grid, NormReport, TrajectoryNorm};
use serde::{Deserialize, Serialize};

use crate::config::{self, SolveConfig, VelocitySpec};
use crate::error::{CliError, CliResult};
use crate::{
    CalibrateArgs, Cli, Command, GridArgs, LabCommand, LabRunArgs, LogLevel, LpCommand, NormArgs, SolveArgs,
    SolveKind, SweArgs, SweCommand,
};

pub fn dispatch(cli: &Cli) -> CliResult<()> {
    fs::create_dir_all(&cli.out_dir).map_err(|e| besov_sw::Error::io(&cli.out_dir, e))?;
    let ctx = Ctx { cli };
    match &cli.command {
        Command::Lp(LpCommand::DumpPartition(g)) => dump_partition(&ctx, g),
        Command::Norm(a) => norm(&ctx, a),
        Command::Lab(LabCommand::Run(a)) => lab_run(&ctx, a),
        Command::Lab(LabCommand::Calibrate(a)) => lab_calibrate(&ctx, a),
        Command::Solve(a) => solve(&ctx, a),
        Command::Swe(SweCommand::Iterate(a)) => swe_iterate(&ctx, a),
        Command::Swe(SweCommand::Direct(a)) => swe_direct(&ctx, a),
        Command::Swe(SweCommand::Global(a)) => swe_global(&ctx, a),
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.cli.out_dir.join(name)
    }

    fn info(&self, msg: impl AsRef<str>) {
        if self.cli.log_level >= LogLevel::Info {
            eprintln!("{}", msg.as_ref());
        }
    }

    /// Refuses to start when any planned output already exists.
    fn guard(&self, names: &[String]) -> CliResult<()> {
        if self.cli.force {
            return Ok(());
        }
        let taken: Vec<String> = names
            .iter()
            .map(|n| self.path(n))
            .filter(|p| p.exists())
            .map(|p| p.display().to_string())
            .collect();
        if taken.is_empty() {
            Ok(())
        } else {
            Err(CliError::Usage(format!(
                "refusing to overwrite {} (pass --force)",
                taken.join(", ")
            )))
        }
    }

    fn report<T: Serialize>(&self, name: &str, kind: &str, report: &T) -> CliResult<()> {
        let path = self.path(name);
        write_report(&path, kind, report, self.cli.force)?;
        self.info(format!("wrote {}", path.display()));
        Ok(())
    }

    fn text(&self, name: &str, body: &str) -> CliResult<()> {
        let path = self.path(name);
        atomic_write(&path, body.as_bytes(), self.cli.force)?;
        self.info(format!("wrote {}", path.display()));
        Ok(())
    }
}

fn grid_of(g: &GridArgs) -> CliResult<Grid> {
    Ok(Grid::new(g.n, g.length.unwrap_or(8.0 * std::f64::consts::PI))?)
}

fn dump_partition(ctx: &Ctx, g: &GridArgs) -> CliResult<()> {
    let part = build_partition(grid_of(g)?)?;
    let name = format!("partition_n{}.csv", g.n);
    ctx.guard(std::slice::from_ref(&name))?;
    let mut body = String::from("j,k,multiplier\n");
    for (j, k, m) in partition_rows(&part) {
        body.push_str(&format!("{j},{k:.17e},{m:.17e}\n"));
    }
    ctx.text(&name, &body)
}

#[derive(Serialize, Deserialize)]
struct FieldNormReport {
    source: String,
    components: usize,
    norm: NormReport,
}

#[derive(Serialize, Deserialize)]
struct TrajectoryNormReport {
    source: String,
    times: Vec<f64>,
    snapshot_norms: Vec<f64>,
    chemin_lerner: TrajectoryNorm,
}

fn norm(ctx: &Ctx, a: &NormArgs) -> CliResult<()> {
    let params = BesovParams::new(a.s, a.p.value(), a.r.value())?;
    let source = a.field.display().to_string();
    if a.field.extension().is_some_and(|e| e == "json") {
        ctx.guard(&["norm.json".into(), "norm_series.csv".into()])?;
        let traj = read_trajectory(&a.field)?;
        let part = build_partition(*traj.last().grid())?;
        let series = BlockSeries::from_trajectory(&part, &traj.snapshots, params.p)?;
        let snapshot_norms = series.snapshot_norms(params.s, params.r);
        let cl = chemin_lerner_norm(&part, &traj.snapshots, a.rho.unwrap_or(Exponent::INFINITY), params)?;
        let times = traj.times();
        let rows: Vec<Vec<f64>> = times.iter().zip(&snapshot_norms).map(|(t, v)| vec![*t, *v]).collect();
        ctx.report(
            "norm.json",
            "trajectory_norm",
            &TrajectoryNormReport {
                source,
                times,
                snapshot_norms,
                chemin_lerner: cl,
            },
        )?;
        return ctx.text("norm_series.csv", &series_csv(&["t", "norm"], &rows));
    }
    ctx.guard(&["norm.json".into()])?;
    let field = load_field(&a.field)?;
    let part = build_partition(*field.grid())?;
    let rep = besov_norm(&part, &field, params)?;
    ctx.info(format!("||f||_B^{}_{},{} = {:.12e}", params.s, params.p, params.r, rep.total));
    ctx.report(
        "norm.json",
        "norm",
        &FieldNormReport {
            source,
            components: field.components(),
            norm: rep,
        },
    )
}

fn load_field(path: &Path) -> CliResult<Field> {
    if path.extension().is_some_and(|e| e == "csv") {
        let text = fs::read_to_string(path).map_err(|e| besov_sw::Error::io(path, e))?;
        Ok(besov_sw::io::field_from_csv(&text)?)
    } else {
        Ok(read_field(path)?)
    }
}

fn parse_json(flag: &str, text: Option<&str>) -> CliResult<Option<serde_json::Value>> {
    text.map(|t| serde_json::from_str(t).map_err(|e| CliError::Usage(format!("{flag}: {e}"))))
        .transpose()
}

fn lab_run(ctx: &Ctx, a: &LabRunArgs) -> CliResult<()> {
    let params = parse_json("--params", a.params.as_deref())?;
    let check = LabCheck::from_name(&a.check, params.as_ref())?;
    let mut spec: RandomFieldSpec = match parse_json("--fields", a.fields.as_deref())? {
        Some(v) => serde_json::from_value(v).map_err(|e| CliError::Usage(format!("--fields: {e}")))?,
        None => RandomFieldSpec::default(),
    };
    if let Some(seed) = ctx.cli.seed {
        spec.seed = seed;
    }
    let json = format!("lab_{}.json", check.name());
    let csv = format!("lab_{}.csv", check.name());
    ctx.guard(&[json.clone(), csv.clone()])?;
    let part = build_partition(grid_of(&a.grid)?)?;
    let rep = check.run(&part, &spec, a.trials)?;
    ctx.info(format!(
        "{}: worst ratio {:.6e} over {} trials ({} skipped)",
        rep.name, rep.worst_ratio, rep.trials, rep.skipped
    ));
    let mut body = String::from("trial,form,lhs,rhs,ratio\n");
    for r in &rep.samples {
        let ratio = r.ratio.map(|x| format!("{x:.17e}")).unwrap_or_default();
        body.push_str(&format!("{},{},{:.17e},{:.17e},{ratio}\n", r.trial, r.form, r.lhs, r.rhs));
    }
    ctx.report(&json, "estimate", &rep)?;
    ctx.text(&csv, &body)
}

fn lab_calibrate(ctx: &Ctx, a: &CalibrateArgs) -> CliResult<()> {
    ctx.guard(&["constants.json".into()])?;
    let part = build_partition(grid_of(&a.grid)?)?;
    let plan = CalibrationPlan {
        seed: ctx.cli.seed.unwrap_or(CalibrationPlan::default().seed),
        trials: a.trials,
        ensemble: a.ensemble,
        params: BesovParams::new(a.s, a.p.value(), a.r.value())?,
        nu: a.nu,
    };
    let c = calibrate(&part, &plan)?;
    ctx.info(format!("C0 = {:.6}, C_sp = {:.6}, C = {:.6}", c.c0, c.c_sp, c.generic_c));
    ctx.report("constants.json", "constants", &c)
}

/// Reads constants written by `lab calibrate`, or a bare constants object.
fn load_constants(path: &Path) -> CliResult<Constants> {
    let c = match read_report::<Constants>(path) {
        Ok(env) => env.report,
        Err(wrapped) => config::load::<Constants>(path).map_err(|_| wrapped)?,
    };
    c.validate()?;
    Ok(c)
}

#[derive(Serialize, Deserialize)]
struct SolveReport {
    kind: String,
    nu: f64,
    dt: f64,
    steps: usize,
    snapshots: usize,
    trajectory: String,
    l2_initial: f64,
    l2_final: f64,
    max_abs_final: f64,
    estimate: Option<TransportEstimateReport>,
}

fn solve(ctx: &Ctx, a: &SolveArgs) -> CliResult<()> {
    let mut cfg: SolveConfig = config::load(&a.config)?;
    if let Some(seed) = ctx.cli.seed {
        cfg.seed = seed;
    }
    let diffusive = a.kind == SolveKind::Tdiff;
    config::check(&a.config, cfg.violations(diffusive))?;
    let stem = if diffusive { "tdiff" } else { "transport" };
    let report_name = format!("{stem}_report.json");
    let csv_name = format!("{stem}_series.csv");
    ctx.guard(&[format!("{stem}.json"), report_name.clone(), csv_name.clone()])?;

    let indices = cfg
        .estimate
        .as_ref()
        .map(|e| -> CliResult<TransportIndices> {
            let idx = TransportIndices {
                s: e.s,
                p: e.p,
                p1: e.p1,
                r: e.r,
                div_free: e.div_free,
            };
            idx.branch()?;
            Ok(idx)
        })
        .transpose()?;
    let grid = Grid::new(cfg.grid.n, cfg.grid.length)?;
    let part = build_partition(grid)?;
    let params = match &cfg.estimate {
        Some(e) => BesovParams { s: e.s, p: e.p, r: e.r },
        None => BesovParams::new(2.0, 2.0, 2.0)?,
    };
    let initial = cfg.initial.realise(&part, 1, params, cfg.seed, 0)?;
    let v = Steady(velocity_field(&cfg.velocity, &part, params, cfg.seed)?);
    let prob = LinearProblem {
        initial,
        velocity: &v,
        forcing: None,
        nu: cfg.nu,
        horizon: cfg.horizon,
        dt: cfg.dt,
        snapshot_every: cfg.snapshot_every,
    };
    let traj = if diffusive {
        solve_transport_diffusion(&prob)?
    } else {
        solve_transport(&prob)?
    };

    let estimate = match (&cfg.estimate, &indices) {
        (Some(e), Some(idx)) => {
            let c0 = match &ctx.cli.constants {
                Some(p) => load_constants(p)?.c0,
                None => 1.0,
            };
            Some(if diffusive {
                let rho = e.rho.expect("validated");
                let rho1 = e.rho1.unwrap_or(Exponent::finite(1.0));
                check_smoothing_estimate(&part, &traj, &v, None, idx, rho, rho1, c0)?
            } else {
                check_transport_estimate(&part, &traj, &v, None, idx, c0)?
            })
        }
        _ => None,
    };

    let l2 = Exponent::finite(2.0);
    let rows: Vec<Vec<f64>> = traj
        .snapshots
        .iter()
        .map(|(t, f)| vec![*t, lp_norm(f, l2), f.max_abs()])
        .collect();
    let index = write_trajectory(&ctx.cli.out_dir, stem, &traj, ctx.cli.force)?;
    ctx.info(format!("wrote {}", index.display()));
    let report = SolveReport {
        kind: stem.into(),
        nu: traj.meta.nu,
        dt: traj.meta.dt,
        steps: traj.meta.steps,
        snapshots: traj.snapshots.len(),
        trajectory: format!("{stem}.json"),
        l2_initial: rows[0][1],
        l2_final: rows.last().expect("non-empty")[1],
        max_abs_final: traj.last().max_abs(),
        estimate,
    };
    ctx.text(&csv_name, &series_csv(&["t", "l2", "max_abs"], &rows))?;
    ctx.report(&report_name, "solve", &report)?;
    if let Some(est) = &report.estimate {
        if !est.satisfied {
            return Err(CliError::Diagnostic(format!(
                "{} estimate fails with C0 = {} (slack {:.3e})",
                est.pieces.kind, est.c0, est.slack
            )));
        }
    }
    Ok(())
}

fn velocity_field(spec: &VelocitySpec, part: &DyadicPartition, params: BesovParams, seed: u64) -> CliResult<Field> {
    let grid = *part.grid();
    Ok(match spec {
        VelocitySpec::Constant { value } => {
            Field::from_components(&[Field::constant(grid, value[0]), Field::constant(grid, value[1])])?
        }
        VelocitySpec::Shear { amplitude } => shear_velocity(grid, *amplitude),
        VelocitySpec::Field { field } => field.realise(part, 2, params, seed, 2)?,
    })
}

fn load_swe(ctx: &Ctx, a: &SweArgs) -> CliResult<SwConfig> {
    let mut cfg: SwConfig = config::load(&a.config)?;
    if let Some(seed) = ctx.cli.seed {
        cfg.seed = seed;
    }
    if let Some(h) = a.horizon {
        cfg.horizon = h;
    }
    config::check(&a.config, cfg.violations())?;
    Ok(cfg)
}

/// `--constants`, then the config's own block, then a fresh calibration.
fn resolve_constants(ctx: &Ctx, setup: &Setup) -> CliResult<Constants> {
    if let Some(p) = &ctx.cli.constants {
        return load_constants(p);
    }
    if let Some(c) = &setup.cfg.constants {
        return Ok(c.clone());
    }
    ctx.info("no constants supplied; calibrating with the default plan");
    let plan = CalibrationPlan {
        params: setup.cfg.params(),
        ..Default::default()
    };
    Ok(calibrate(&setup.part, &plan)?)
}

fn swe_iterate(ctx: &Ctx, a: &SweArgs) -> CliResult<()> {
    let cfg = load_swe(ctx, a)?;
    let names = [
        "iterate_report.json",
        "iterate_series.csv",
        "iterate_u_final.bswf",
        "iterate_h_final.bswf",
    ];
    ctx.guard(&names.map(String::from))?;
    let setup = cfg.prepare()?;
    let constants = resolve_constants(ctx, &setup)?;
    let run = run_iteration(&setup, &constants)?;
    let rep = &run.report;
    ctx.info(format!(
        "T1 = {:.4e}, T2 = {:.4e}, q = {:.4e}, gap = {:.3e} (bound {:.3e})",
        rep.budget.t1, rep.budget.t2, rep.q, rep.direct_gap, rep.gap_bound
    ));
    let rows: Vec<Vec<f64>> = rep
        .iterates
        .iter()
        .map(|it| {
            vec![
                it.n as f64,
                it.norms.u_linf,
                it.norms.u_l2,
                it.norms.h_linf,
                it.delta.unwrap_or(f64::NAN),
                it.residual,
            ]
        })
        .collect();
    ctx.report(names[0], "iteration", rep)?;
    ctx.text(
        names[1],
        &series_csv(&["n", "u_linf", "u_l2", "h_linf", "delta", "residual"], &rows),
    )?;
    let last = |fs: &[Vec<Field>]| fs.last().and_then(|v| v.last()).cloned();
    if let (Some(u), Some(h)) = (last(&run.u), last(&run.h)) {
        write_field(&ctx.path(names[2]), &u, ctx.cli.force)?;
        write_field(&ctx.path(names[3]), &h, ctx.cli.force)?;
    }
    let mut failed = Vec::new();
    if !rep.all_members {
        failed.push("an iterate left the budget set".to_string());
    }
    if !rep.contraction {
        failed.push(format!("fitted ratio q = {:.4} exceeds {}", rep.q, besov_sw::sw::Q_MAX));
    }
    if !rep.gap_ok {
        failed.push(format!(
            "iterate-to-direct gap {:.3e} exceeds {:.3e}",
            rep.direct_gap, rep.gap_bound
        ));
    }
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Diagnostic(failed.join("; ")))
    }
}

#[derive(Serialize, Deserialize)]
struct DirectReport {
    horizon: f64,
    dt: f64,
    steps: usize,
    snapshots: usize,
    completed: bool,
    failure: Option<String>,
    min_height: f64,
    max_courant: f64,
    mass_drift: f64,
}

fn swe_direct(ctx: &Ctx, a: &SweArgs) -> CliResult<()> {
    let cfg = load_swe(ctx, a)?;
    let names = ["direct_report.json", "direct_series.csv", "direct_u.json", "direct_h.json"];
    ctx.guard(&names.map(String::from))?;
    let setup = cfg.prepare()?;
    let (run, failure) = integrate_partial(&setup, cfg.horizon, cfg.checkpoint_every)?;
    if let Some(e) = &failure {
        if !matches!(e, besov_sw::Error::RegimeExit { .. }) {
            return Err(CliError::Core(failure.expect("checked")));
        }
    }
    let params = cfg.params();
    let mut rows = Vec::new();
    for (((t, u), (_, h)), m) in run.u.snapshots.iter().zip(&run.h.snapshots).zip(&run.mass) {
        rows.push(vec![
            *t,
            besov_norm(&setup.part, u, params)?.total,
            besov_norm(&setup.part, h, params)?.total,
            *m,
            1.0 + h.min_value(),
        ]);
    }
    let report = DirectReport {
        horizon: cfg.horizon,
        dt: run.u.meta.dt,
        steps: run.u.meta.steps,
        snapshots: run.u.snapshots.len(),
        completed: failure.is_none(),
        failure: failure.as_ref().map(|e| e.to_string()),
        min_height: run.min_height,
        max_courant: run.max_courant,
        mass_drift: run.relative_mass_drift(),
    };
    ctx.info(format!(
        "direct: {} snapshots, mass drift {:.3e}, min height {:.6}",
        report.snapshots, report.mass_drift, report.min_height
    ));
    write_trajectory(&ctx.cli.out_dir, "direct_u", &run.u, ctx.cli.force)?;
    write_trajectory(&ctx.cli.out_dir, "direct_h", &run.h, ctx.cli.force)?;
    ctx.text(
        names[1],
        &series_csv(&["t", "u_besov", "h_besov", "mass", "min_height"], &rows),
    )?;
    ctx.report(names[0], "direct", &report)?;
    match failure {
        Some(e) => Err(e.into()),
        None => Ok(()),
    }
}

fn swe_global(ctx: &Ctx, a: &SweArgs) -> CliResult<()> {
    let cfg = load_swe(ctx, a)?;
    let names = ["global_report.json", "global_series.csv"];
    ctx.guard(&names.map(String::from))?;
    let setup = cfg.prepare()?;
    let rep = global_run(&setup)?;
    let c = rep.envelope_c;
    let rows: Vec<Vec<f64>> = rep
        .checkpoints
        .iter()
        .map(|p| {
            vec![
                p.t,
                p.u_besov,
                p.h_besov,
                p.u_besov + p.h_besov,
                c * (c * p.t).exp(),
                p.u_sobolev,
                p.u_dissipation,
                p.min_height,
                p.mass,
            ]
        })
        .collect();
    ctx.info(format!(
        "global: completed {}, sup {:.4e}, envelope C = {:.4e}, mass drift {:.3e}",
        rep.completed, rep.sup_norm, c, rep.mass_drift
    ));
    ctx.report(names[0], "global", &rep)?;
    ctx.text(
        names[1],
        &series_csv(
            &[
                "t",
                "u_besov",
                "h_besov",
                "size",
                "envelope",
                "u_sobolev",
                "u_dissipation",
                "min_height",
                "mass",
            ],
            &rows,
        ),
    )?;
    if let Some(x) = &rep.regime_exit {
        return Err(besov_sw::Error::RegimeExit {
            t: x.t,
            min_height: x.min_height,
        }
        .into());
    }
    if !rep.below_envelope {
        return Err(CliError::Diagnostic("norms exceed the fitted envelope".into()));
    }
    Ok(())
}
