//! Empirical verification of functional inequalities: each check draws
//! random fields, evaluates both sides of an estimate with its unknown
//! constant removed, and reports the worst observed ratio.

mod checks;
mod random;

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use checks::*;
pub use random::{trial_rng, RandomFieldSpec};

/// One evaluated form of an estimate for one trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub form: String,
    pub lhs: f64,
    pub rhs: f64,
    /// `None` when the right side vanished and the trial was skipped.
    pub ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FormSummary {
    pub form: String,
    pub counted: usize,
    pub skipped: usize,
    pub worst_ratio: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub name: String,
    pub trials: usize,
    pub seed: u64,
    pub skipped: usize,
    /// Draws discarded for violating a check's sampling precondition.
    pub regenerated: usize,
    pub worst_ratio: f64,
    pub params: BTreeMap<String, serde_json::Value>,
    pub forms: Vec<FormSummary>,
    pub samples: Vec<TrialRecord>,
}

impl EstimateReport {
    pub fn form(&self, name: &str) -> Option<&FormSummary> {
        self.forms.iter().find(|f| f.form == name)
    }

    /// Running maximum after the first `k` trials, per the stored samples.
    pub fn worst_after(&self, k: usize) -> f64 {
        self.samples
            .iter()
            .filter(|r| r.trial < k)
            .filter_map(|r| r.ratio)
            .fold(0.0, f64::max)
    }
}

/// Values produced by one trial: `(form, lhs, rhs)` triples and a count of
/// regenerated draws.
pub struct TrialOutcome {
    pub forms: Vec<(&'static str, f64, f64)>,
    pub regenerated: usize,
}

impl TrialOutcome {
    pub fn single(form: &'static str, lhs: f64, rhs: f64) -> Self {
        TrialOutcome {
            forms: vec![(form, lhs, rhs)],
            regenerated: 0,
        }
    }
}

/// Runs `trials` independent trials in parallel and folds them in trial order.
pub fn run_trials<F>(
    name: &str,
    trials: usize,
    seed: u64,
    params: BTreeMap<String, serde_json::Value>,
    trial: F,
) -> Result<EstimateReport>
where
    F: Fn(&mut ChaCha8Rng) -> Result<TrialOutcome> + Sync,
{
    if trials == 0 {
        return Err(Error::Config("at least one trial is required".into()));
    }
    let outcomes: Vec<TrialOutcome> = (0..trials)
        .into_par_iter()
        .map(|i| trial(&mut trial_rng(seed, i as u64)))
        .collect::<Result<Vec<_>>>()?;

    let mut samples = Vec::new();
    let mut forms: Vec<FormSummary> = Vec::new();
    let mut regenerated = 0;
    for (i, out) in outcomes.into_iter().enumerate() {
        regenerated += out.regenerated;
        for (form, lhs, rhs) in out.forms {
            if !(lhs.is_finite() && rhs.is_finite()) {
                return Err(Error::Precondition(format!(
                    "{name}: non-finite side in trial {i} ({form}): lhs = {lhs}, rhs = {rhs}"
                )));
            }
            let ratio = if rhs > 0.0 { Some(lhs / rhs) } else { None };
            let pos = match forms.iter().position(|f| f.form == form) {
                Some(p) => p,
                None => {
                    forms.push(FormSummary {
                        form: form.to_string(),
                        counted: 0,
                        skipped: 0,
                        worst_ratio: 0.0,
                    });
                    forms.len() - 1
                }
            };
            let summary = &mut forms[pos];
            match ratio {
                Some(r) => {
                    summary.counted += 1;
                    summary.worst_ratio = summary.worst_ratio.max(r);
                }
                None => summary.skipped += 1,
            }
            samples.push(TrialRecord {
                trial: i,
                form: form.to_string(),
                lhs,
                rhs,
                ratio,
            });
        }
    }
    Ok(EstimateReport {
        name: name.to_string(),
        trials,
        seed,
        skipped: forms.iter().map(|f| f.skipped).sum(),
        regenerated,
        worst_ratio: forms.iter().map(|f| f.worst_ratio).fold(0.0, f64::max),
        params,
        forms,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_denominators_are_skipped() {
        let rep = run_trials("toy", 4, 1, BTreeMap::new(), |_| {
            Ok(TrialOutcome::single("main", 0.0, 0.0))
        })
        .unwrap();
        assert_eq!(rep.skipped, 4);
        assert_eq!(rep.worst_ratio, 0.0);
        assert!(run_trials("toy", 0, 1, BTreeMap::new(), |_| Ok(TrialOutcome::single("m", 1.0, 1.0))).is_err());
    }

    #[test]
    fn order_is_deterministic() {
        use rand::Rng;
        let go = || {
            run_trials("toy", 64, 5, BTreeMap::new(), |rng| {
                let x: f64 = rng.random();
                Ok(TrialOutcome::single("main", x, 1.0))
            })
            .unwrap()
        };
        assert_eq!(go(), go());
        let rep = go();
        assert!(rep.worst_after(8) <= rep.worst_after(64));
    }
}
