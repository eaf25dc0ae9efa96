//! Big-norm budgets `E1, E2` and the time windows `T1 >= T2`.

use serde::{Deserialize, Serialize};

use crate::calibration::{Constants, Provenance};
use crate::error::{Error, Result};

use super::Setup;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub name: String,
    pub value: f64,
    pub bound: f64,
    pub holds: bool,
}

fn cond(name: &str, value: f64, bound: f64) -> Condition {
    Condition {
        name: name.into(),
        value,
        bound,
        holds: value <= bound,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IterationBudget {
    pub e1: f64,
    pub e2: f64,
    pub t1: f64,
    pub t2: f64,
    pub c0: f64,
    pub c_sp: f64,
    pub generic_c: f64,
    pub u0_norm: f64,
    pub h0_norm: f64,
    /// `1 / (8 C0 C_sp)`, the admissible size of `||h0||_{B^s}`.
    pub smallness_bound: f64,
    pub t1_conditions: Vec<Condition>,
    pub t2_conditions: Vec<Condition>,
    pub provenance: Option<Provenance>,
}

/// The four requirements on the big-norm window.
pub fn t1_conditions(t: f64, e1: f64, c0: f64, c_sp: f64, nu: f64) -> Vec<Condition> {
    vec![
        cond("T <= 1", t, 1.0),
        cond("exp(C0^2 E1 T) <= 2", (c0 * c0 * e1 * t).exp(), 2.0),
        cond("exp(2 C0 C_sp E1 T) <= 2", (2.0 * c0 * c_sp * e1 * t).exp(), 2.0),
        cond("(1 + nu T)^(3/2) <= 2", (1.0 + nu * t).powf(1.5), 2.0),
    ]
}

/// The requirements on the contraction window with generic constant `c`.
pub fn t2_conditions(t: f64, e1: f64, e2: f64, c: f64, s: f64, p: f64) -> Vec<Condition> {
    let third = 1.0 / 12.0;
    let a = 1.0 + e1 + e1 * e2 + e1 * e2 * e2;
    vec![
        cond(
            "C(1+E1+E1E2+E1E2^2)(T^(s/2-1/p)+T^(1/2)+T^((s-1)/2)) <= 1/12",
            c * a * (t.powf(s / 2.0 - 1.0 / p) + t.sqrt() + t.powf((s - 1.0) / 2.0)),
            third,
        ),
        cond(
            "C(E1+E2)(T^(1/2)+T^(s-2/p)+T^((s-1)/2)) <= 1/12",
            c * (e1 + e2) * (t.sqrt() + t.powf(s - 2.0 / p) + t.powf((s - 1.0) / 2.0)),
            third,
        ),
        cond("C(1+E2)T^(1/2) <= 1/12", c * (1.0 + e2) * t.sqrt(), third),
        cond("C E1 T^(1/2) <= 1/12", c * e1 * t.sqrt(), third),
    ]
}

fn all_hold(c: &[Condition]) -> bool {
    c.iter().all(|c| c.holds)
}

/// Largest `T` in `[0, hi]` passing `ok`, by 60 bisection steps.
fn bisect(hi: f64, ok: impl Fn(f64) -> bool) -> f64 {
    if ok(hi) {
        return hi;
    }
    let (mut lo, mut hi) = (0.0, hi);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

pub fn compute_budgets(setup: &Setup, constants: &Constants) -> Result<IterationBudget> {
    constants.validate()?;
    let cfg = &setup.cfg;
    let (c0, c_sp, c) = (constants.c0, constants.c_sp, constants.generic_c);
    let smallness_bound = 1.0 / (8.0 * c0 * c_sp);
    if setup.h0_norm > smallness_bound {
        return Err(Error::Precondition(format!(
            "||h0||_B^s = {:.6e} exceeds the smallness bound 1/(8 C0 C_sp) = {smallness_bound:.6e}",
            setup.h0_norm
        )));
    }
    let e1 = 8.0 / cfg.nu * c0 * setup.u0_norm;
    let e2 = 4.0 * c0 * setup.h0_norm;
    let (s, p) = (cfg.s, cfg.p.value());
    let t1 = bisect(1.0, |t| all_hold(&t1_conditions(t, e1, c0, c_sp, cfg.nu)));
    let t2 = bisect(t1, |t| all_hold(&t2_conditions(t, e1, e2, c, s, p)));
    if !(t2 > 0.0) {
        return Err(Error::Precondition("no positive contraction window exists".into()));
    }
    Ok(IterationBudget {
        e1,
        e2,
        t1,
        t2,
        c0,
        c_sp,
        generic_c: c,
        u0_norm: setup.u0_norm,
        h0_norm: setup.h0_norm,
        smallness_bound,
        t1_conditions: t1_conditions(t1, e1, c0, c_sp, cfg.nu),
        t2_conditions: t2_conditions(t2, e1, e2, c, s, p),
        provenance: constants.provenance.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sw::{Preset, SwConfig};

    #[test]
    fn zero_data_window() {
        for nu in [0.5, 0.9] {
            let st = SwConfig { nu, ..Default::default() }.prepare().unwrap();
            let b = compute_budgets(&st, &Constants::unit()).unwrap();
            assert_eq!((b.e1, b.e2), (0.0, 0.0));
            let expect = f64::min(1.0, (2f64.powf(2.0 / 3.0) - 1.0) / nu);
            assert!((b.t1 - expect).abs() < 1e-12, "{} vs {expect}", b.t1);
            assert!(b.t2 <= b.t1);
            // With E1 = E2 = 0 the binding condition is 3 C T^(1/2) <= 1/12 at s = p = 2.
            assert!((b.t2 - 1.0 / 1296.0).abs() < 1e-12);
        }
    }

    #[test]
    fn first_budget_is_the_formula() {
        let st = SwConfig {
            u0: Preset::Random {
                beta: 3.0,
                seed: Some(1),
                amplitude: None,
                norm: Some(0.01),
                k_max: None,
            },
            ..Default::default()
        }
        .prepare()
        .unwrap();
        let b = compute_budgets(&st, &Constants::unit()).unwrap();
        assert!((b.e1 - 0.16).abs() < 1e-15);
        assert!(b.t2 <= b.t1);
        assert!(b.t1_conditions.iter().all(|c| c.holds));
        assert!(b.t2_conditions.iter().all(|c| c.holds));
    }

    #[test]
    fn smallness_is_enforced() {
        let st = SwConfig {
            h0: Preset::SingleMode { mode: [1, 0], amplitude: 0.5 },
            ..Default::default()
        }
        .prepare()
        .unwrap();
        let consts = Constants { c_sp: 2.0, ..Constants::unit() };
        assert!(matches!(compute_budgets(&st, &consts), Err(Error::Precondition(_))));
    }
}
