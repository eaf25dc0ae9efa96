use std::f64::consts::PI;

use besov_sw::besov::{lp_norm, Exponent};
use besov_sw::grid::pointwise_product;
use besov_sw::lab::{trial_rng, RandomFieldSpec};
use besov_sw::partition::{build_partition, dyadic_block, paraproduct, remainder};
use besov_sw::{DyadicPartition, Grid};
use proptest::prelude::*;

fn part() -> DyadicPartition {
    build_partition(Grid::new(32, 8.0 * PI).unwrap()).unwrap()
}

/// Independent evaluation of the ball profile: 1 inside radius 1, 0 beyond
/// 4/3, and the exp(-1/t) ramp in between.
fn ball(r: f64) -> f64 {
    let ramp = |t: f64| if t > 0.0 { (-1.0 / t).exp() } else { 0.0 };
    let x = (r - 1.0) * 3.0;
    if x <= 0.0 {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        ramp(1.0 - x) / (ramp(x) + ramp(1.0 - x))
    }
}

#[test]
fn tables_match_independent_profile() {
    for (n, len) in [(32, 8.0 * PI), (128, 32.0 * PI)] {
        let p = build_partition(Grid::new(n, len).unwrap()).unwrap();
        for j in p.blocks() {
            for (m, k) in p.table(j).unwrap().iter().zip(p.radii()) {
                let expect = if j < 0 {
                    ball(*k)
                } else {
                    let s = 2f64.powi(j);
                    ball(k / (2.0 * s)) - ball(k / s)
                };
                assert!((m - expect).abs() < 1e-14, "j = {j}, |k| = {k}: {m} vs {expect}");
            }
        }
    }
}

#[test]
fn square_sum_bounds() {
    let p = build_partition(Grid::with_default_length(128).unwrap()).unwrap();
    let cover = p.coverage_radius();
    for (idx, k) in p.radii().iter().enumerate() {
        if *k > cover {
            continue;
        }
        let sq: f64 = p.blocks().map(|j| p.table(j).unwrap()[idx].powi(2)).sum();
        assert!((0.5 - 1e-15..=1.0 + 1e-15).contains(&sq), "|k| = {k}: {sq}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn bony_identity(seed in any::<u64>()) {
        let p = part();
        let mut rng = trial_rng(seed, 0);
        let spec = RandomFieldSpec::default();
        let (u, v) = (spec.sample(&p, 1, &mut rng), spec.sample(&p, 1, &mut rng));
        let sum = paraproduct(&p, &u, &v).unwrap()
            .add(&paraproduct(&p, &v, &u).unwrap()).unwrap()
            .add(&remainder(&p, &u, &v).unwrap()).unwrap();
        let prod = pointwise_product(&u, &v).unwrap();
        prop_assert!(sum.sub(&prod).unwrap().max_abs() <= 1e-12 * prod.max_abs());
    }

    #[test]
    fn blocks_are_almost_orthogonal_and_contracting(seed in any::<u64>()) {
        let p = part();
        let f = RandomFieldSpec::default().sample(&p, 1, &mut trial_rng(seed, 0));
        let two = Exponent::finite(2.0);
        let top = f.max_abs();
        for j in p.blocks() {
            let b = dyadic_block(&p, j, &f).unwrap();
            prop_assert!(lp_norm(&b, two) <= lp_norm(&f, two) * (1.0 + 1e-14));
            for k in p.blocks().filter(|k| (k - j).abs() >= 2) {
                let bb = dyadic_block(&p, k, &b).unwrap();
                prop_assert!(bb.max_abs() < 1e-13 * top);
            }
        }
    }
}
