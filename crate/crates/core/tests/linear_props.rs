use std::f64::consts::PI;

use besov_sw::besov::{besov_norm, lp_norm, BesovParams, Exponent};
use besov_sw::lab::{trial_rng, RandomFieldSpec};
use besov_sw::linear::{
    shear_velocity, solve_linear, transport_estimate_pieces, FnSampler, LinearProblem, StagePoint, Steady,
    TransportIndices,
};
use besov_sw::partition::build_partition;
use besov_sw::{DyadicPartition, Field, Grid};
use proptest::prelude::*;

fn part() -> DyadicPartition {
    build_partition(Grid::new(32, 8.0 * PI).unwrap()).unwrap()
}

fn data(seed: u64, idx: u64) -> Field {
    RandomFieldSpec::default().sample(&part(), 1, &mut trial_rng(seed, idx))
}

fn problem<'a>(initial: Field, v: &'a Steady, forcing: Option<&'a Steady>, nu: f64) -> LinearProblem<'a> {
    LinearProblem {
        initial,
        velocity: v,
        forcing: forcing.map(|g| g as _),
        nu,
        horizon: 0.6,
        dt: 0.02,
        snapshot_every: 5,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn superposition(seed in any::<u64>(), alpha in -2.0f64..2.0, beta in -2.0f64..2.0, nu in prop_oneof![Just(0.0), 0.05f64..0.8]) {
        let g = *part().grid();
        let v = Steady(shear_velocity(g, 0.8));
        let (f0, g0) = (data(seed, 0), data(seed, 1));
        let forcing = Steady(g0.clone());
        let scaled = Steady(g0.scaled(beta));
        let a = solve_linear(&problem(f0.clone(), &v, None, nu), None).unwrap();
        let b = solve_linear(&problem(Field::zeros(g, 1), &v, Some(&forcing), nu), None).unwrap();
        let c = solve_linear(&problem(f0.scaled(alpha), &v, Some(&scaled), nu), None).unwrap();
        for ((sa, sb), sc) in a.snapshots.iter().zip(&b.snapshots).zip(&c.snapshots) {
            let want = sa.1.linear_combination(alpha, &sb.1, beta).unwrap();
            let err = sc.1.sub(&want).unwrap().max_abs();
            prop_assert!(err <= 1e-10 * want.max_abs().max(1.0), "t = {}: {err}", sc.0);
        }
    }

    #[test]
    fn l2_nonincreasing_for_divergence_free_velocity(seed in any::<u64>(), amp in 0.1f64..1.2, nu in prop_oneof![Just(0.0), 0.01f64..0.8]) {
        let g = *part().grid();
        let v = Steady(shear_velocity(g, amp));
        let mut prob = problem(data(seed, 0), &v, None, nu);
        prob.snapshot_every = 1;
        let traj = solve_linear(&prob, None).unwrap();
        let two = Exponent::finite(2.0);
        let norms: Vec<f64> = traj.snapshots.iter().map(|(_, f)| lp_norm(f, two)).collect();
        for w in norms.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-13), "{} -> {}", w[0], w[1]);
        }
    }
}

/// Accumulated `V(t)` against the closed form for the velocity
/// `(1 + t) (A sin(w x2), 0)`, whose Jacobian has the single entry `A w cos(w x2)`.
#[test]
fn accumulator_matches_closed_form_on_both_branches() {
    let p = part();
    let g = *p.grid();
    let amp = 0.7;
    let w = 2.0 * PI / g.length();
    let base = shear_velocity(g, amp);
    let sampler = FnSampler(|at: StagePoint| Ok(base.scaled(1.0 + at.t)));
    let prob = LinearProblem {
        initial: data(3, 0),
        velocity: &sampler,
        forcing: None,
        nu: 0.0,
        horizon: 0.5,
        dt: 0.01,
        snapshot_every: 7,
    };
    let traj = solve_linear(&prob, None).unwrap();
    let dv = Field::from_fn(g, |_, y| amp * w * (w * y).cos());
    let inf = Exponent::INFINITY;

    for (s, expect_branch) in [(2.0, "regular"), (0.5, "critical")] {
        let idx = TransportIndices {
            s,
            p: Exponent::finite(2.0),
            p1: inf,
            r: Exponent::finite(2.0),
            div_free: true,
        };
        let pieces = transport_estimate_pieces(&p, &traj, &sampler, None, &idx).unwrap();
        assert_eq!(serde_json::to_value(pieces.branch).unwrap(), expect_branch);
        let rate = if s > 1.0 {
            besov_norm(&p, &dv, BesovParams { s: s - 1.0, p: inf, r: idx.r }).unwrap().total
        } else {
            besov_norm(&p, &dv, BesovParams { s: 0.0, p: inf, r: inf }).unwrap().total + amp * w
        };
        for (t, acc) in traj.times().iter().zip(&pieces.v_accumulator) {
            let exact = rate * (t + 0.5 * t * t);
            assert!((acc - exact).abs() <= 1e-12 * exact.max(1e-300), "{expect_branch} t = {t}: {acc} vs {exact}");
        }
    }
}
