//! Nonparametric percentile bootstrap for value estimates of fixed regimes.

use rand::Rng;
use rayon::prelude::*;

use super::nuisance::Nuisances;
use super::value::estimate_value_cells;
use super::{units, CellTable, EstimateError, EstimationConfig, Unit};
use crate::data::Dataset;
use crate::regime::{IntervalBound, Regime};
use crate::simulate::{derive_seed, replicate_rng};

/// Redraws allowed for a replicate whose resample cannot be estimated.
pub const MAX_REDRAWS: u64 = 10;

const STREAM: u64 = 0xB007;

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapOutcome {
    /// One interval per regime, truncated to `[0,1]` for binary outcomes.
    pub intervals: Vec<IntervalBound>,
    /// Replicate values, `[replicate][regime]`.
    pub replicates: Vec<Vec<f64>>,
    pub dropped: usize,
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn one_replicate<F>(sample: &[Unit], template: &CellTable, cfg: &EstimationConfig, b: u64, stat: &F) -> Option<Vec<f64>>
where
    F: Fn(&CellTable) -> Result<Vec<f64>, EstimateError>,
{
    let base = derive_seed(cfg.seed, STREAM);
    for attempt in 0..=MAX_REDRAWS {
        let mut rng = replicate_rng(base, b * (MAX_REDRAWS + 1) + attempt);
        let mut cells = CellTable::new(template.factor_levels.clone(), template.instrument, template.binary_outcome);
        for _ in 0..sample.len() {
            cells.add(sample[rng.random_range(0..sample.len())]);
        }
        match stat(&cells) {
            Ok(v) => return Some(v),
            Err(e) => log::debug!("bootstrap replicate {b} attempt {attempt}: {e}"),
        }
    }
    log::warn!("bootstrap replicate {b} dropped after {MAX_REDRAWS} redraws");
    None
}

/// Runs `cfg.bootstrap_reps` replicates of a vector statistic in parallel.
/// Failed resamples are redrawn, then dropped; entries are `None` when dropped.
pub fn replicate<F>(sample: &[Unit], template: &CellTable, cfg: &EstimationConfig, stat: F) -> Vec<Option<Vec<f64>>>
where
    F: Fn(&CellTable) -> Result<Vec<f64>, EstimateError> + Sync,
{
    (0..cfg.bootstrap_reps as u64).into_par_iter().map(|b| one_replicate(sample, template, cfg, b, &stat)).collect()
}

/// Drop-limit check shared by every bootstrap consumer.
pub fn check_dropped(results: &[Option<Vec<f64>>]) -> Result<usize, EstimateError> {
    let reps = results.len();
    let dropped = results.iter().filter(|r| r.is_none()).count();
    if dropped * 100 > reps || dropped == reps {
        return Err(EstimateError::TooManyDroppedReplicates { dropped, reps });
    }
    Ok(dropped)
}

/// Percentile interval of one coordinate across kept replicates.
pub fn percentile_interval(replicates: &[Vec<f64>], k: usize) -> IntervalBound {
    let mut xs: Vec<f64> = replicates.iter().map(|r| r[k]).collect();
    xs.sort_by(f64::total_cmp);
    IntervalBound::new(quantile(&xs, 0.025), quantile(&xs, 0.975))
}

/// Applies the drop limit and forms percentile intervals.
pub fn summarize(results: Vec<Option<Vec<f64>>>, n_regimes: usize, binary: bool) -> Result<BootstrapOutcome, EstimateError> {
    let dropped = check_dropped(&results)?;
    let replicates: Vec<Vec<f64>> = results.into_iter().flatten().collect();
    let intervals = (0..n_regimes)
        .map(|k| {
            let ci = percentile_interval(&replicates, k);
            if binary {
                IntervalBound::new(ci.lo.clamp(0.0, 1.0), ci.hi.clamp(0.0, 1.0))
            } else {
                ci
            }
        })
        .collect();
    Ok(BootstrapOutcome { intervals, replicates, dropped })
}

/// Joint bootstrap of several fixed regimes over the same resamples.
pub fn bootstrap_values(sample: &[Unit], template: &CellTable, regimes: &[&Regime], cfg: &EstimationConfig) -> Result<BootstrapOutcome, EstimateError> {
    if sample.is_empty() {
        return Err(EstimateError::EmptySample);
    }
    let results = replicate(sample, template, cfg, |cells| {
        let n = Nuisances::fit(cells, cfg)?;
        regimes.iter().map(|r| estimate_value_cells(cells, r, &n, cfg.value_form)).collect()
    });
    summarize(results, regimes.len(), template.binary_outcome)
}

/// Percentile interval for the value of one fixed regime on `dataset`.
pub fn bootstrap_ci(dataset: &Dataset, regime: &Regime, cfg: &EstimationConfig) -> Result<IntervalBound, EstimateError> {
    let template = CellTable::new(dataset.schema().factor_levels(), dataset.schema().instrument, dataset.binary_outcome());
    let us = units(dataset)?;
    Ok(bootstrap_values(&us, &template, &[regime], cfg)?.intervals[0])
}
