use std::f64::consts::PI;

use besov_sw::besov::{besov_norm, chemin_lerner_norm, sobolev_norm, BesovParams, BlockSeries, Exponent};
use besov_sw::lab::{trial_rng, RandomFieldSpec};
use besov_sw::partition::build_partition;
use besov_sw::{DyadicPartition, Field, Grid};
use proptest::prelude::*;

fn part() -> DyadicPartition {
    build_partition(Grid::new(32, 8.0 * PI).unwrap()).unwrap()
}

fn exponent() -> impl Strategy<Value = Exponent> {
    prop_oneof![
        Just(Exponent::finite(1.0)),
        Just(Exponent::finite(2.0)),
        Just(Exponent::finite(3.5)),
        Just(Exponent::INFINITY),
    ]
}

fn params() -> impl Strategy<Value = BesovParams> {
    (-1.5f64..3.0, exponent(), exponent()).prop_map(|(s, p, r)| BesovParams { s, p, r })
}

/// Direct definition: block quadrature norms, dyadic weights, `l^r` sum.
fn oracle(part: &DyadicPartition, f: &Field, prm: BesovParams) -> f64 {
    let h2 = f.grid().spacing().powi(2);
    let lp = |b: &Field| -> f64 {
        let mags = b.magnitude();
        if prm.p.is_infinite() {
            mags.iter().copied().fold(0.0, f64::max)
        } else {
            (h2 * mags.iter().map(|m| m.powf(prm.p.value())).sum::<f64>()).powf(1.0 / prm.p.value())
        }
    };
    let weighted: Vec<f64> = part
        .decompose(f)
        .unwrap()
        .iter()
        .enumerate()
        .map(|(i, b)| 2f64.powf((i as f64 - 1.0) * prm.s) * lp(b))
        .collect();
    if prm.r.is_infinite() {
        weighted.iter().copied().fold(0.0, f64::max)
    } else {
        weighted.iter().map(|w| w.powf(prm.r.value())).sum::<f64>().powf(1.0 / prm.r.value())
    }
}

fn sample(seed: u64, idx: u64) -> Field {
    RandomFieldSpec::default().sample(&part(), 1, &mut trial_rng(seed, idx))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn matches_definition(seed in any::<u64>(), prm in params()) {
        let p = part();
        let f = sample(seed, 0);
        let got = besov_norm(&p, &f, prm).unwrap().total;
        let want = oracle(&p, &f, prm);
        prop_assert!((got - want).abs() <= 1e-12 * want, "{got} vs {want}");
    }

    #[test]
    fn triangle_inequality(seed in any::<u64>(), prm in params()) {
        let p = part();
        let (f, g) = (sample(seed, 0), sample(seed, 1));
        let n = |x: &Field| besov_norm(&p, x, prm).unwrap().total;
        let sum = n(&f.add(&g).unwrap());
        prop_assert!(sum <= (n(&f) + n(&g)) * (1.0 + 1e-10));
    }

    #[test]
    fn homogeneity(seed in any::<u64>(), prm in params(), alpha in -50.0f64..50.0, e in -8i32..8) {
        let p = part();
        let f = sample(seed, 0);
        let base = besov_norm(&p, &f, prm).unwrap().total;
        let pow2 = 2f64.powi(e);
        prop_assert_eq!(besov_norm(&p, &f.scaled(-pow2), prm).unwrap().total, pow2 * base);
        let scaled = besov_norm(&p, &f.scaled(alpha), prm).unwrap().total;
        prop_assert!((scaled - alpha.abs() * base).abs() <= 1e-13 * alpha.abs() * base);
    }
}

fn trajectory(seed: u64) -> Vec<(f64, Field)> {
    let times = [0.0, 0.1, 0.35, 0.5, 0.9, 1.0];
    times
        .iter()
        .enumerate()
        .map(|(i, t)| (*t, sample(seed, i as u64)))
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn chemin_lerner_sup_sup_is_definition(seed in any::<u64>(), s in -1.0f64..2.5, p in exponent()) {
        let part = part();
        let traj = trajectory(seed);
        let prm = BesovParams { s, p, r: Exponent::INFINITY };
        let cl = chemin_lerner_norm(&part, &traj, Exponent::INFINITY, prm).unwrap().total;
        let want = traj
            .iter()
            .map(|(_, f)| besov_norm(&part, f, prm).unwrap().total)
            .fold(0.0, f64::max);
        prop_assert!((cl - want).abs() <= 1e-14 * want);
    }

    #[test]
    fn minkowski_orders_the_two_time_norms(seed in any::<u64>(), s in -1.0f64..2.5, p in exponent(), rho in exponent(), r in exponent()) {
        let part = part();
        let series = BlockSeries::from_trajectory(&part, &trajectory(seed), p).unwrap();
        let cl = series.chemin_lerner(rho, s, r).total;
        let lb = series.lebesgue_besov(rho, s, r);
        if rho <= r {
            prop_assert!(cl <= lb * (1.0 + 1e-12), "rho <= r: {cl} > {lb}");
        }
        if rho >= r {
            prop_assert!(lb <= cl * (1.0 + 1e-12), "rho >= r: {lb} > {cl}");
        }
    }
}

/// The `B^s_{2,2}` to `H^s` ratio of a fixed trigonometric polynomial does not
/// depend on how finely it is sampled.
#[test]
fn sobolev_band_is_stable_under_refinement() {
    let len = 8.0 * PI;
    let dk = 2.0 * PI / len;
    let f = |x: f64, y: f64| {
        (dk * x).cos() + 0.4 * (3.0 * dk * x - 2.0 * dk * y).sin() + 0.1 * (7.0 * dk * y + 4.0 * dk * x).cos()
    };
    for s in [-1.0, 0.0, 1.0, 2.5] {
        let prm = BesovParams::new(s, 2.0, 2.0).unwrap();
        let ratios: Vec<f64> = [32, 64, 128]
            .iter()
            .map(|n| {
                let g = Grid::new(*n, len).unwrap();
                let p = build_partition(g).unwrap();
                let field = Field::from_fn(g, f);
                besov_norm(&p, &field, prm).unwrap().total / sobolev_norm(&field, s)
            })
            .collect();
        eprintln!("s = {s}: B^s_22 / H^s = {ratios:?}");
        for r in &ratios {
            assert!((r - ratios[0]).abs() < 1e-10 * ratios[0]);
            assert!(*r > 0.1 && *r < 10.0);
        }
    }
}
