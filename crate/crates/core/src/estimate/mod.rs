//! Finite-sample estimation: nuisance regressions, plug-in regimes, value
//! estimates, influence functions and bootstrap intervals.
//!
//! All covariates entering a design are categorical, so every estimator here
//! is a function of the per-`(l, z, a)` sufficient statistics in a
//! [`CellTable`]. Bootstrap replicates only rebuild that table.

pub mod bootstrap;
pub mod eif;
pub mod glm;
pub mod nuisance;
pub mod value;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{ContextSpace, Dataset};
use crate::identify::IdentifyError;
use crate::regime::RegimeError;

pub use bootstrap::{bootstrap_ci, bootstrap_values, BootstrapOutcome};
pub use eif::{eif_psi, eif_psi1, eif_value, one_step_contrast, one_step_psi};
pub use glm::{fit_glm, CellStats, Design, Family, GlmSettings, ModelId, NuisanceFit};
pub use nuisance::{estimate_delta, estimate_psi1, Nuisances};
pub use value::{estimate_regimes, estimate_value, estimate_value_cells, EstimatedRegimes};

#[derive(Debug, Error, PartialEq)]
pub enum EstimateError {
    #[error("dataset has no instrument column")]
    NoInstrument,
    #[error("no rows with z = {z}")]
    EmptyInstrumentStratum { z: u8 },
    #[error("no rows with a = {a}")]
    EmptyTreatmentStratum { a: u8 },
    #[error("no rows in context {0}")]
    EmptyContext(usize),
    #[error("estimation needs observational rows")]
    NotObservational,
    #[error("sample is empty")]
    EmptySample,
    #[error("invalid estimation config: {0}")]
    InvalidConfig(String),
    #[error("{dropped} of {reps} bootstrap replicates dropped (limit 1%)")]
    TooManyDroppedReplicates { dropped: usize, reps: usize },
    #[error(transparent)]
    Identify(#[from] IdentifyError),
    #[error(transparent)]
    Regime(#[from] RegimeError),
}

/// How the value of a regime is estimated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueForm {
    /// `I[g≠A] V̂(A,L) + I[g=A] Ê(Y|A,L)`.
    #[default]
    Regression,
    /// `I[g≠A] V̂(A,L) + I[g=A] Y` with propensity-weighted `V̂`.
    Ipw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimationConfig {
    pub split_fraction: f64,
    pub bootstrap_reps: usize,
    pub seed: u64,
    pub delta_floor: f64,
    pub propensity_clip: f64,
    pub irls_tol: f64,
    pub irls_max_iter: usize,
    pub design: Design,
    pub value_form: ValueForm,
}

impl Default for EstimationConfig {
    fn default() -> Self {
        EstimationConfig {
            split_fraction: 0.6,
            bootstrap_reps: 500,
            seed: 0,
            delta_floor: 1e-3,
            propensity_clip: 1e-3,
            irls_tol: 1e-8,
            irls_max_iter: 100,
            design: Design::Saturated,
            value_form: ValueForm::Regression,
        }
    }
}

impl EstimationConfig {
    pub fn validate(&self) -> Result<(), EstimateError> {
        let bad = |m: &str| Err(EstimateError::InvalidConfig(m.into()));
        if !(self.split_fraction > 0.0 && self.split_fraction <= 1.0) {
            return bad("split_fraction must lie in (0, 1]");
        }
        if self.bootstrap_reps == 0 {
            return bad("bootstrap_reps must be positive");
        }
        if !(self.delta_floor > 0.0 && self.delta_floor < 1.0) {
            return bad("delta_floor must lie in (0, 1)");
        }
        if !(self.propensity_clip > 0.0 && self.propensity_clip < 0.5) {
            return bad("propensity_clip must lie in (0, 0.5)");
        }
        if !(self.irls_tol > 0.0) || self.irls_max_iter == 0 {
            return bad("irls_tol and irls_max_iter must be positive");
        }
        Ok(())
    }

    pub fn glm_settings(&self) -> GlmSettings {
        GlmSettings { tol: self.irls_tol, max_iter: self.irls_max_iter, ..GlmSettings::default() }
    }
}

/// One observational row reduced to what estimation uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Unit {
    pub l: usize,
    pub z: u8,
    pub a: u8,
    pub y: f64,
}

/// Reduces an observational dataset to [`Unit`]s.
pub fn units(ds: &Dataset) -> Result<Vec<Unit>, EstimateError> {
    let obs = ds.observations().ok_or(EstimateError::NotObservational)?;
    let space = ds.schema().context_space();
    Ok(obs.iter().map(|o| Unit { l: space.index(&o.context), z: o.z.unwrap_or(0), a: o.a, y: o.y }).collect())
}

/// Outcome statistics per `[l][z][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CellTable {
    pub factor_levels: Vec<usize>,
    pub instrument: bool,
    pub binary_outcome: bool,
    pub cells: Vec<[[CellStats; 2]; 2]>,
}

impl CellTable {
    pub fn new(factor_levels: Vec<usize>, instrument: bool, binary_outcome: bool) -> Self {
        let nl = factor_levels.iter().product();
        CellTable { factor_levels, instrument, binary_outcome, cells: vec![[[CellStats::default(); 2]; 2]; nl] }
    }

    pub fn from_dataset(ds: &Dataset) -> Result<Self, EstimateError> {
        let mut t = CellTable::new(ds.schema().factor_levels(), ds.schema().instrument, ds.binary_outcome());
        for u in units(ds)? {
            t.add(u);
        }
        Ok(t)
    }

    pub fn from_units<'a, I: IntoIterator<Item = &'a Unit>>(factor_levels: Vec<usize>, instrument: bool, binary_outcome: bool, units: I) -> Self {
        let mut t = CellTable::new(factor_levels, instrument, binary_outcome);
        for u in units {
            t.add(*u);
        }
        t
    }

    pub fn add(&mut self, u: Unit) {
        self.cells[u.l][u.z as usize][u.a as usize].add(u.y, 1.0);
    }

    pub fn space(&self) -> ContextSpace {
        ContextSpace::new(self.factor_levels.clone())
    }

    pub fn n_contexts(&self) -> usize {
        self.cells.len()
    }

    pub fn total(&self) -> f64 {
        self.cells.iter().flatten().flatten().map(|c| c.n).sum()
    }

    pub fn n_l(&self, l: usize) -> f64 {
        self.cells[l].iter().flatten().map(|c| c.n).sum()
    }

    /// Sample mean of `Y`.
    pub fn mean_y(&self) -> f64 {
        self.cells.iter().flatten().flatten().map(|c| c.sum).sum::<f64>() / self.total()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_roundtrip_and_defaults() {
        let cfg: EstimationConfig = serde_json::from_str(r#"{"seed": 7, "design": "main_effects"}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.design, Design::MainEffects);
        assert_eq!(cfg.bootstrap_reps, 500);
        assert!(cfg.validate().is_ok());
        assert!(serde_json::from_str::<EstimationConfig>(r#"{"sed": 7}"#).is_err());
        let bad = EstimationConfig { split_fraction: 0.0, ..EstimationConfig::default() };
        assert!(bad.validate().is_err());
    }
}
