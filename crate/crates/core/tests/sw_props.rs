use besov_sw::besov::{chemin_lerner_norm, BesovParams, Exponent};
use besov_sw::calibration::Constants;
use besov_sw::sw::{run_iteration, IterationRun, Preset, SwConfig};
use besov_sw::Field;
use proptest::prelude::*;

fn config(seed: u64, u_norm: f64, h_norm: f64) -> SwConfig {
    let random = |seed, norm| Preset::Random {
        beta: 3.0,
        seed: Some(seed),
        amplitude: None,
        norm: Some(norm),
        k_max: None,
    };
    SwConfig {
        u0: random(seed, u_norm),
        h0: random(seed + 100, h_norm),
        ..Default::default()
    }
}

fn run(cfg: &SwConfig) -> IterationRun {
    run_iteration(&cfg.prepare().unwrap(), &Constants::unit()).unwrap()
}

fn with_times(times: &[f64], fields: &[Field]) -> Vec<(f64, Field)> {
    times.iter().copied().zip(fields.iter().cloned()).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(4))]

    #[test]
    fn reported_norms_match_stored_trajectories(seed in 1u64..1000, u in 0.001f64..0.01, h in 0.001f64..0.01) {
        let cfg = config(seed, u, h);
        let out = run(&cfg);
        let part = cfg.prepare().unwrap().part;
        let prm = cfg.params();
        let inf = Exponent::INFINITY;
        for rec in &out.report.iterates {
            let us = with_times(&out.times, &out.u[rec.n - 1]);
            let hs = with_times(&out.times, &out.h[rec.n - 1]);
            let u_linf = chemin_lerner_norm(&part, &us, inf, prm).unwrap().total;
            let u_l2 = chemin_lerner_norm(&part, &us, Exponent::finite(2.0), BesovParams { s: prm.s + 1.0, ..prm }).unwrap().total;
            let h_linf = chemin_lerner_norm(&part, &hs, inf, prm).unwrap().total;
            for (got, want) in [(rec.norms.u_linf, u_linf), (rec.norms.u_l2, u_l2), (rec.norms.h_linf, h_linf)] {
                prop_assert!((got - want).abs() <= 1e-12 * want.max(1e-300), "n = {}: {got} vs {want}", rec.n);
            }
        }
    }

    #[test]
    fn residuals_fall_to_a_floor_and_deltas_decay(seed in 1u64..1000, u in 0.001f64..0.01, h in 0.001f64..0.01) {
        let out = run(&config(seed, u, h));
        let its = &out.report.iterates;
        let floor = its.iter().map(|r| r.residual).fold(f64::INFINITY, f64::min);
        for w in its.windows(2) {
            let (a, b) = (w[0].residual, w[1].residual);
            prop_assert!(b <= a || b <= 10.0 * floor, "residual {a} -> {b}, floor {floor}");
        }
        prop_assert!(its[0].residual > 100.0 * floor);
        let deltas: Vec<f64> = its.iter().filter_map(|r| r.delta).collect();
        let significant: Vec<f64> = deltas.iter().copied().filter(|d| *d > out.report.roundoff_floor).collect();
        prop_assert!(significant.len() >= 2);
        for w in significant.windows(2) {
            prop_assert!(w[1] < w[0], "{deltas:?}");
        }
    }
}

#[test]
fn iteration_is_bit_reproducible() {
    let cfg = config(4, 0.006, 0.004);
    let a = run(&cfg);
    let b = run(&cfg);
    assert_eq!(serde_json::to_string(&a.report).unwrap(), serde_json::to_string(&b.report).unwrap());
    for (x, y) in a.u.iter().flatten().zip(b.u.iter().flatten()) {
        assert_eq!(x.values(), y.values());
    }
}

#[test]
fn zero_data_is_exactly_zero() {
    let out = run(&SwConfig::default());
    for rec in &out.report.iterates {
        assert_eq!(rec.norms.u_linf + rec.norms.u_l2 + rec.norms.h_linf, 0.0);
        assert_eq!(rec.residual, 0.0);
        assert!(rec.delta.is_none_or(|d| d == 0.0));
    }
    assert!(out.u.iter().flatten().chain(out.h.iter().flatten()).all(|f| f.max_abs() == 0.0));
    assert_eq!(out.report.direct_gap, 0.0);
}
