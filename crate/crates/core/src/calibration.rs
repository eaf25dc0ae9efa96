//! Empirical constants consumed by the iteration budgets.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::besov::{BesovParams, Exponent};
use crate::error::{Error, Result};
use crate::lab::{LabCheck, RandomFieldSpec, SprParams};
use crate::linear::{
    calibrate_c0, smoothing_estimate_pieces, transport_estimate_pieces, ShearCase, TransportIndices,
};
use crate::partition::DyadicPartition;

/// Where a set of constants came from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub seed: u64,
    pub trials: usize,
    pub ensemble: usize,
    pub n: usize,
    pub length: f64,
    pub params: BesovParams,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    /// Transport and smoothing estimate constant.
    pub c0: f64,
    /// `||f||_{L^inf} <= C_sp ||f||_{B^s_{p,r}}`.
    pub c_sp: f64,
    /// Generic constant for the contraction window: the largest lab ratio, at least one.
    pub generic_c: f64,
    #[serde(default)]
    pub lab: BTreeMap<String, f64>,
    #[serde(default)]
    pub provenance: Option<Provenance>,
}

impl Constants {
    /// All constants equal to one, without provenance.
    pub fn unit() -> Self {
        Constants {
            c0: 1.0,
            c_sp: 1.0,
            generic_c: 1.0,
            lab: BTreeMap::new(),
            provenance: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("c0", self.c0), ("c_sp", self.c_sp), ("generic_c", self.generic_c)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("constant {name} = {v} must be positive and finite")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationPlan {
    pub seed: u64,
    pub trials: usize,
    /// Number of shear-flow cases for `C0`.
    pub ensemble: usize,
    pub params: BesovParams,
    /// Viscosity of the smoothing ensemble.
    pub nu: f64,
}

impl Default for CalibrationPlan {
    fn default() -> Self {
        CalibrationPlan {
            seed: 7,
            trials: 100,
            ensemble: 8,
            params: BesovParams {
                s: 2.0,
                p: Exponent::finite(2.0),
                r: Exponent::finite(2.0),
            },
            nu: 0.5,
        }
    }
}

/// Runs the lab stability suite, the `L^inf` embedding at the plan's indices
/// and a shear ensemble for `C0`.
pub fn calibrate(part: &DyadicPartition, plan: &CalibrationPlan) -> Result<Constants> {
    if plan.ensemble == 0 {
        return Err(Error::Config("calibration needs at least one ensemble case".into()));
    }
    let spec = RandomFieldSpec {
        seed: plan.seed,
        ..Default::default()
    };
    let mut lab = BTreeMap::new();
    for check in LabCheck::stability_suite() {
        let rep = check.run(part, &spec, plan.trials)?;
        lab.insert(check.name().to_string(), rep.worst_ratio);
    }
    let BesovParams { s, p, r } = plan.params;
    let sp = LabCheck::LinftyEmbedding(SprParams { s, p, r }).run(part, &spec, plan.trials)?;
    let c_sp = sp.worst_ratio;
    lab.insert("linfty_embedding_at_params".into(), c_sp);

    let idx = TransportIndices {
        s,
        p,
        p1: Exponent::INFINITY,
        r,
        div_free: true,
    };
    let pieces: Vec<_> = (0..plan.ensemble as u64)
        .into_par_iter()
        .map(|i| -> Result<Vec<_>> {
            let (tr0, v0) = ShearCase::member(plan.seed, i, 0.0).run(part)?;
            let (tr1, v1) = ShearCase::member(plan.seed, i, plan.nu).run(part)?;
            Ok(vec![
                transport_estimate_pieces(part, &tr0, &v0, None, &idx)?,
                smoothing_estimate_pieces(part, &tr1, &v1, None, &idx, Exponent::finite(2.0), Exponent::finite(1.0))?,
                smoothing_estimate_pieces(part, &tr1, &v1, None, &idx, Exponent::INFINITY, Exponent::finite(1.0))?,
            ])
        })
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let c0 = calibrate_c0(&pieces)?;
    let generic_c = lab.values().copied().fold(1.0, f64::max);
    let grid = part.grid();
    Ok(Constants {
        c0,
        c_sp,
        generic_c,
        lab,
        provenance: Some(Provenance {
            seed: plan.seed,
            trials: plan.trials,
            ensemble: plan.ensemble,
            n: grid.n(),
            length: grid.length(),
            params: plan.params,
        }),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_constants_roundtrip() {
        let c = Constants::unit();
        c.validate().unwrap();
        let back: Constants = serde_json::from_str(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
        let bad = Constants { c0: 0.0, ..c };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = r#"{"c0": 1, "c_sp": 1, "generic_c": 1, "extra": 2}"#;
        assert!(serde_json::from_str::<Constants>(text).is_err());
    }
}
