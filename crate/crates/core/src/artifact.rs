//! The persisted result of a fit: learned tables, gamma map, value estimates
//! with percentile intervals, and enough metadata to audit the run.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Context, Dataset, Schema};
use crate::estimate::glm::{Design, Family};
use crate::estimate::{bootstrap_values, estimate_regimes, estimate_value_cells, units, CellTable, EstimateError, EstimationConfig, Nuisances};
use crate::identify::Gamma;
use crate::regime::{IntervalBound, Regime, RegimeKind};
use crate::simulate::{derive_seed, replicate_rng};

pub const SCHEMA_VERSION: u32 = 1;

const SPLIT_STREAM: u64 = 0x5EED_5917;

#[derive(Debug, Error)]
pub enum ArtifactError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("artifact json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("artifact schema_version {found} is not supported (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("invalid artifact: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GammaEntry {
    pub context: Context,
    pub gamma: Gamma,
    pub instruction: String,
}

/// A value estimate. The interval is the truncated percentile interval,
/// widened where needed so that it contains `estimate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueEstimate {
    pub regime: RegimeKind,
    pub label: String,
    pub estimate: f64,
    pub ci: IntervalBound,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceSummary {
    pub model: String,
    pub family: Family,
    pub design: Design,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    pub separation: bool,
    pub low_count_contexts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeArtifact {
    pub schema_version: u32,
    pub schema: Schema,
    pub optimal: Regime,
    pub superoptimal: Regime,
    pub instrument_superoptimal: Regime,
    pub gamma: Vec<GammaEntry>,
    /// Training rows per context; zero marks a context with no data behind it.
    pub context_support: Vec<usize>,
    pub values: Vec<ValueEstimate>,
    pub nuisance_summaries: Vec<NuisanceSummary>,
    /// Training contexts whose instrument strength was floored.
    pub floored_contexts: Vec<usize>,
    pub config: EstimationConfig,
    pub data_fingerprint: String,
    pub n_train: usize,
    pub n_eval: usize,
    pub dropped_replicates: usize,
}

/// Row labels of the value table.
pub fn value_label(kind: RegimeKind) -> &'static str {
    match kind {
        RegimeKind::Observed => "E(Y)",
        RegimeKind::OptimalL => "E(Y^g_opt)",
        RegimeKind::SuperoptimalLA => "E(Y^g_sup)",
        RegimeKind::SuperoptimalLAZ => "E(Y^g_z-sup)",
        RegimeKind::ExplicitTable => "E(Y^g)",
    }
}

/// Widens `ci` to contain `point`.
pub fn widen_to(ci: IntervalBound, point: f64) -> IntervalBound {
    IntervalBound::new(ci.lo.min(point), ci.hi.max(point))
}

/// Train/eval index split. `fraction = 1` uses every row for both.
pub fn split_indices(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let all: Vec<usize> = (0..n).collect();
    if fraction >= 1.0 || n < 2 {
        return (all.clone(), all);
    }
    let mut perm = all;
    perm.shuffle(&mut replicate_rng(derive_seed(seed, SPLIT_STREAM), 0));
    let n_train = ((n as f64 * fraction).round() as usize).clamp(1, n - 1);
    let eval = perm.split_off(n_train);
    (perm, eval)
}

/// Point estimates and bootstrap intervals for a list of regimes on `eval`.
pub fn value_table(eval: &Dataset, regimes: &[&Regime], cfg: &EstimationConfig) -> Result<(Vec<ValueEstimate>, usize), EstimateError> {
    let cells = CellTable::from_dataset(eval)?;
    let n = Nuisances::fit(&cells, cfg)?;
    let points = regimes.iter().map(|r| estimate_value_cells(&cells, r, &n, cfg.value_form)).collect::<Result<Vec<_>, _>>()?;
    let template = CellTable::new(cells.factor_levels.clone(), cells.instrument, cells.binary_outcome);
    let boot = bootstrap_values(&units(eval)?, &template, regimes, cfg)?;
    let values = regimes
        .iter()
        .zip(points)
        .zip(boot.intervals)
        .map(|((r, est), ci)| ValueEstimate { regime: r.kind(), label: value_label(r.kind()).to_string(), estimate: est, ci: widen_to(ci, est) })
        .collect();
    Ok((values, boot.dropped))
}

/// The full workflow: split, learn regimes on train, value them on eval.
pub fn fit(ds: &Dataset, cfg: &EstimationConfig) -> Result<RegimeArtifact, EstimateError> {
    cfg.validate()?;
    if !ds.schema().instrument {
        return Err(EstimateError::NoInstrument);
    }
    let (train_idx, eval_idx) = split_indices(ds.len(), cfg.split_fraction, cfg.seed);
    let train = ds.select(&train_idx);
    let eval = ds.select(&eval_idx);
    let train_cells = CellTable::from_dataset(&train)?;
    let nuis = Nuisances::fit(&train_cells, cfg)?;
    let context_support = (0..train_cells.n_contexts()).map(|l| train_cells.n_l(l) as usize).collect();
    let learned = estimate_regimes(&nuis);
    let space = ds.schema().context_space();
    let observed = Regime::observed(space.clone());
    let regimes = [&observed, &learned.optimal, &learned.superoptimal, &learned.instrument_superoptimal];
    let (values, dropped) = value_table(&eval, &regimes, cfg)?;
    let gamma = learned
        .gamma
        .iter()
        .enumerate()
        .map(|(l, &g)| GammaEntry { context: space.context(l), gamma: g, instruction: g.instruction().to_string() })
        .collect();
    let nuisance_summaries = nuis
        .fits
        .iter()
        .map(|f| NuisanceSummary {
            model: f.model_id.to_string(),
            family: f.family,
            design: f.design,
            converged: f.converged,
            iterations: f.iterations,
            deviance: f.deviance,
            separation: f.separation,
            low_count_contexts: f.low_count.clone(),
        })
        .collect();
    Ok(RegimeArtifact {
        schema_version: SCHEMA_VERSION,
        schema: ds.schema().clone(),
        optimal: learned.optimal,
        superoptimal: learned.superoptimal,
        instrument_superoptimal: learned.instrument_superoptimal,
        gamma,
        context_support,
        values,
        nuisance_summaries,
        floored_contexts: nuis.floored,
        config: *cfg,
        data_fingerprint: ds.fingerprint(),
        n_train: train.len(),
        n_eval: eval.len(),
        dropped_replicates: dropped,
    })
}

/// Renders a value table with 4-decimal numbers.
pub fn render_value_table(values: &[ValueEstimate]) -> String {
    let mut out = String::from("Marginal value functions under different regimes\n");
    let _ = writeln!(out, "{:<14} {:>9}   95% CI", "regime", "estimate");
    for v in values {
        let _ = writeln!(out, "{:<14} {:>9.4}   {}", v.label, v.estimate, v.ci);
    }
    out
}

impl RegimeArtifact {
    pub fn regime(&self, kind: RegimeKind) -> Option<&Regime> {
        match kind {
            RegimeKind::OptimalL => Some(&self.optimal),
            RegimeKind::SuperoptimalLA => Some(&self.superoptimal),
            RegimeKind::SuperoptimalLAZ => Some(&self.instrument_superoptimal),
            _ => None,
        }
    }

    pub fn gamma_at(&self, ctx: usize) -> Option<Gamma> {
        self.gamma.get(ctx).map(|g| g.gamma)
    }

    /// Checks version, table shapes and interval invariants.
    pub fn validate(&self) -> Result<(), ArtifactError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ArtifactError::Version { found: self.schema_version, expected: SCHEMA_VERSION });
        }
        let space = self.schema.context_space();
        for (name, r) in [("optimal", &self.optimal), ("superoptimal", &self.superoptimal), ("instrument_superoptimal", &self.instrument_superoptimal)] {
            if r.space() != &space {
                return Err(ArtifactError::Invalid(format!("{name} table does not match the schema's context space")));
            }
        }
        if self.gamma.len() != space.len() {
            return Err(ArtifactError::Invalid(format!("gamma table has {} entries for {} contexts", self.gamma.len(), space.len())));
        }
        if self.context_support.len() != space.len() {
            return Err(ArtifactError::Invalid("context_support does not match the context space".into()));
        }
        for (l, g) in self.gamma.iter().enumerate() {
            if g.context != space.context(l) {
                return Err(ArtifactError::Invalid(format!("gamma entry {l} has context {}", g.context)));
            }
        }
        for v in &self.values {
            if !(v.ci.lo <= v.estimate && v.estimate <= v.ci.hi) {
                return Err(ArtifactError::Invalid(format!("{}: interval {} excludes the estimate {:.4}", v.label, v.ci, v.estimate)));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("artifact serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ArtifactError> {
        let a: RegimeArtifact = serde_json::from_str(s)?;
        a.validate()?;
        Ok(a)
    }

    pub fn save<P: AsRef<Path>>(&self, path: P) -> Result<(), ArtifactError> {
        std::fs::write(path, self.to_json() + "\n")?;
        Ok(())
    }

    pub fn load<P: AsRef<Path>>(path: P) -> Result<Self, ArtifactError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Table-style report of the value estimates plus fit notes.
    pub fn report(&self) -> String {
        let mut out = render_value_table(&self.values);
        let _ = writeln!(out, "n_train = {}, n_eval = {}, bootstrap reps = {}", self.n_train, self.n_eval, self.config.bootstrap_reps);
        if !self.floored_contexts.is_empty() {
            let _ = writeln!(out, "warning: instrument strength floored in contexts {:?}", self.floored_contexts);
        }
        if self.nuisance_summaries.iter().any(|s| s.separation) {
            let _ = writeln!(out, "warning: separation in at least one nuisance model");
        }
        out
    }
}
