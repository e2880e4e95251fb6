//! Unmeasured-confounding diagnostic by interval containment.
//!
//! If treatment were unconfounded given `L`, every stratum mean `E(Y | B=b, C=c)`
//! and every superoptimal value `E(Y^{g_sup} | B=b, C=c)` would lie inside the
//! range of `E(Y^g | C=c)` over covariate-only regimes. A mean outside that
//! range refutes `Y^a ⫫ A | L`. The range endpoints use the weights
//! `P(L=l | C=c)`, so the check is exact when `C` is the full context (the
//! default) or when `A ⫫ L | C`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::Dataset;
use crate::estimate::bootstrap::{check_dropped, percentile_interval, replicate};
use crate::estimate::{estimate_regimes, units, CellTable, EstimateError, EstimationConfig, Nuisances};
use crate::regime::{IntervalBound, Regime};

#[derive(Debug, Error, PartialEq)]
pub enum DiagnoseError {
    #[error("coarse stratum {0} has no probability mass")]
    EmptyStratum(usize),
    #[error("coarsening covers {found} contexts, expected {expected}")]
    CoarseningSize { found: usize, expected: usize },
    #[error("superoptimal regime must be keyed on (intent, context)")]
    RegimeKeying,
    #[error(transparent)]
    Estimate(#[from] EstimateError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntentCoarsening {
    /// Strata by natural treatment.
    #[default]
    Identity,
    /// One stratum pooling both natural treatments.
    Constant,
}

/// Maps natural treatments and contexts to coarse labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coarsening {
    pub intent: IntentCoarsening,
    /// Coarse label of each context, labels `0..k`.
    pub context_labels: Vec<usize>,
}

impl Coarsening {
    pub fn identity(n_contexts: usize, intent: IntentCoarsening) -> Self {
        Coarsening { intent, context_labels: (0..n_contexts).collect() }
    }

    pub fn constant(n_contexts: usize, intent: IntentCoarsening) -> Self {
        Coarsening { intent, context_labels: vec![0; n_contexts] }
    }

    pub fn n_coarse(&self) -> usize {
        self.context_labels.iter().max().map_or(0, |m| m + 1)
    }

    /// Intent strata: `Some(a)` per treatment, or `None` for the pooled stratum.
    pub fn intent_strata(&self) -> Vec<Option<u8>> {
        match self.intent {
            IntentCoarsening::Identity => vec![Some(0), Some(1)],
            IntentCoarsening::Constant => vec![None],
        }
    }

    fn check(&self, n_contexts: usize) -> Result<(), DiagnoseError> {
        if self.context_labels.len() != n_contexts {
            return Err(DiagnoseError::CoarseningSize { found: self.context_labels.len(), expected: n_contexts });
        }
        Ok(())
    }
}

/// `[Σ_l min_a ψ₁(a,l) P(l|c), Σ_l max_a ψ₁(a,l) P(l|c)]` per coarse stratum.
pub fn confounding_intervals(n: &Nuisances, coarsening: &Coarsening) -> Result<Vec<IntervalBound>, DiagnoseError> {
    coarsening.check(n.n_contexts())?;
    (0..coarsening.n_coarse())
        .map(|c| {
            let members: Vec<usize> = (0..n.n_contexts()).filter(|&l| coarsening.context_labels[l] == c).collect();
            let mass: f64 = members.iter().map(|&l| n.p_l[l]).sum();
            if mass <= 0.0 {
                return Err(DiagnoseError::EmptyStratum(c));
            }
            let (mut lo, mut hi) = (0.0, 0.0);
            for &l in &members {
                let w = n.p_l[l] / mass;
                lo += w * n.psi1(0, l).min(n.psi1(1, l));
                hi += w * n.psi1(0, l).max(n.psi1(1, l));
            }
            Ok(IntervalBound::new(lo, hi))
        })
        .collect()
}

/// Means tested in one `(b, c)` stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumTest {
    pub intent: Option<u8>,
    pub stratum: usize,
    pub observed_mean: f64,
    pub superoptimal_value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observed_ci: Option<IntervalBound>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub superoptimal_ci: Option<IntervalBound>,
}

/// `E(Y | B=b, C=c)` and `E(Y^{g_sup} | B=b, C=c)` from (true or fitted) nuisances.
pub fn stratum_means(n: &Nuisances, superoptimal: &Regime, coarsening: &Coarsening) -> Result<Vec<StratumTest>, DiagnoseError> {
    coarsening.check(n.n_contexts())?;
    if superoptimal.uses_instrument() {
        return Err(DiagnoseError::RegimeKeying);
    }
    let mut out = Vec::new();
    for b in coarsening.intent_strata() {
        for c in 0..coarsening.n_coarse() {
            let (mut mass, mut obs, mut sup) = (0.0, 0.0, 0.0);
            for l in (0..n.n_contexts()).filter(|&l| coarsening.context_labels[l] == c) {
                for a in (0..2u8).filter(|&a| b.is_none_or(|b| b == a)) {
                    let w = n.p_al(l, a);
                    if w <= 0.0 {
                        continue;
                    }
                    let g = superoptimal.assign(a, l, None).map_err(EstimateError::from)?;
                    mass += w;
                    obs += w * n.mean_y_given_al[l][a as usize];
                    sup += w * n.cmgn(g, a, l);
                }
            }
            if mass > 0.0 {
                out.push(StratumTest {
                    intent: b,
                    stratum: c,
                    observed_mean: obs / mass,
                    superoptimal_value: sup / mass,
                    observed_ci: None,
                    superoptimal_ci: None,
                });
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Contained,
    Violated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumVerdict {
    pub intent: Option<u8>,
    pub stratum: usize,
    pub interval: IntervalBound,
    /// Interval used for the decision: the CI-widened envelope when available.
    pub envelope: IntervalBound,
    pub observed_mean: f64,
    pub superoptimal_value: f64,
    pub verdict: Verdict,
    /// Which of `observed_mean` / `superoptimal_value` fell outside.
    pub violated_by: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfoundingReport {
    pub strata: Vec<StratumVerdict>,
    pub any_violation: bool,
}

impl ConfoundingReport {
    pub fn violated(&self) -> impl Iterator<Item = &StratumVerdict> {
        self.strata.iter().filter(|s| s.verdict == Verdict::Violated)
    }

    pub fn render(&self) -> String {
        let mut out = String::from("Confounding diagnostic (interval containment)\n");
        let _ = writeln!(out, "{:<8} {:<8} {:<20} {:>9} {:>9}  verdict", "intent", "stratum", "interval", "E(Y|b,c)", "sup");
        for s in &self.strata {
            let b = s.intent.map_or("all".to_string(), |a| a.to_string());
            let v = match s.verdict {
                Verdict::Contained => "contained".to_string(),
                Verdict::Violated => format!("violated ({})", s.violated_by.join(", ")),
            };
            let _ = writeln!(out, "{:<8} {:<8} {:<20} {:>9.4} {:>9.4}  {}", b, s.stratum, s.interval.to_string(), s.observed_mean, s.superoptimal_value, v);
        }
        out
    }
}

/// Per-stratum verdicts. With `envelopes` and test CIs supplied, a stratum is
/// violated only when a test CI lies entirely outside the envelope.
pub fn confounding_check(intervals: &[IntervalBound], envelopes: Option<&[IntervalBound]>, tests: &[StratumTest], tol: f64) -> ConfoundingReport {
    let strata: Vec<StratumVerdict> = tests
        .iter()
        .map(|t| {
            let interval = intervals[t.stratum];
            let envelope = envelopes.map_or(interval, |e| e[t.stratum]);
            let outside = |point: f64, ci: Option<IntervalBound>| {
                let range = ci.unwrap_or(IntervalBound::point(point));
                range.hi < envelope.lo - tol || range.lo > envelope.hi + tol
            };
            let mut violated_by = Vec::new();
            if outside(t.observed_mean, t.observed_ci) {
                violated_by.push("observed_mean".to_string());
            }
            if outside(t.superoptimal_value, t.superoptimal_ci) {
                violated_by.push("superoptimal_value".to_string());
            }
            StratumVerdict {
                intent: t.intent,
                stratum: t.stratum,
                interval,
                envelope,
                observed_mean: t.observed_mean,
                superoptimal_value: t.superoptimal_value,
                verdict: if violated_by.is_empty() { Verdict::Contained } else { Verdict::Violated },
                violated_by,
            }
        })
        .collect();
    let any_violation = strata.iter().any(|s| s.verdict == Verdict::Violated);
    ConfoundingReport { strata, any_violation }
}

/// Population diagnostic on known nuisances (no sampling error).
pub fn diagnose_population(n: &Nuisances, coarsening: &Coarsening, tol: f64) -> Result<ConfoundingReport, DiagnoseError> {
    let sup = estimate_regimes(n).superoptimal;
    let intervals = confounding_intervals(n, coarsening)?;
    let tests = stratum_means(n, &sup, coarsening)?;
    Ok(confounding_check(&intervals, None, &tests, tol))
}

/// Sample diagnostic with the conservative bootstrap rule. The superoptimal
/// regime is held fixed; it is learned from `ds` when not supplied.
pub fn diagnose_sample(ds: &Dataset, superoptimal: Option<&Regime>, coarsening: &Coarsening, cfg: &EstimationConfig) -> Result<ConfoundingReport, DiagnoseError> {
    let cells = CellTable::from_dataset(ds)?;
    let n = Nuisances::fit(&cells, cfg)?;
    let learned;
    let sup = match superoptimal {
        Some(r) => r,
        None => {
            learned = estimate_regimes(&n).superoptimal;
            &learned
        }
    };
    let intervals = confounding_intervals(&n, coarsening)?;
    let mut tests = stratum_means(&n, sup, coarsening)?;
    let k = intervals.len();
    let keys: Vec<(Option<u8>, usize)> = tests.iter().map(|t| (t.intent, t.stratum)).collect();
    let template = CellTable::new(cells.factor_levels.clone(), cells.instrument, cells.binary_outcome);
    let results = replicate(&units(ds)?, &template, cfg, |resample| {
        let nb = Nuisances::fit(resample, cfg)?;
        let iv = confounding_intervals(&nb, coarsening).map_err(|_| EstimateError::EmptySample)?;
        let tb = stratum_means(&nb, sup, coarsening).map_err(|_| EstimateError::EmptySample)?;
        let mut v: Vec<f64> = iv.iter().map(|i| i.lo).chain(iv.iter().map(|i| i.hi)).collect();
        for key in &keys {
            let t = tb.iter().find(|t| (t.intent, t.stratum) == *key).ok_or(EstimateError::EmptySample)?;
            v.push(t.observed_mean);
            v.push(t.superoptimal_value);
        }
        Ok(v)
    });
    check_dropped(&results)?;
    let reps: Vec<Vec<f64>> = results.into_iter().flatten().collect();
    let envelopes: Vec<IntervalBound> =
        (0..k).map(|c| IntervalBound::new(percentile_interval(&reps, c).lo.min(intervals[c].lo), percentile_interval(&reps, k + c).hi.max(intervals[c].hi))).collect();
    for (j, t) in tests.iter_mut().enumerate() {
        t.observed_ci = Some(percentile_interval(&reps, 2 * k + 2 * j));
        t.superoptimal_ci = Some(percentile_interval(&reps, 2 * k + 2 * j + 1));
    }
    Ok(confounding_check(&intervals, Some(&envelopes), &tests, 0.0))
}
