//! Fitted (or true) nuisance tables over contexts.

use serde::{Deserialize, Serialize};

use super::glm::{fit_glm, CellStats, Design, Family, ModelId, NuisanceFit};
use super::{CellTable, EstimateError, EstimationConfig};
use crate::data::{ContextSpace, Dataset};
use crate::identify::{ObservedLaw, Psi1Table};

/// Every regression the estimators consume, evaluated per context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Nuisances {
    pub factor_levels: Vec<usize>,
    pub clip: f64,
    pub p_l: Vec<f64>,
    pub p_z1_given_l: Vec<f64>,
    /// `[l][z]`
    pub p_a1_given_zl: Vec<[f64; 2]>,
    /// `E((2A-1) Y I[A=a] | l, z)` indexed `[l][z][a]`.
    pub signed_mean: Vec<[[f64; 2]; 2]>,
    pub p_a1_given_l: Vec<f64>,
    /// `[l][a]`
    pub mean_y_given_al: Vec<[f64; 2]>,
    pub mean_y_given_l: Vec<f64>,
    /// Instrument strength after flooring.
    pub delta: Vec<f64>,
    /// `[l][a]`
    pub psi1: Vec<[f64; 2]>,
    /// Contexts whose `|δ̂|` was raised to the floor.
    pub floored: Vec<usize>,
    pub fits: Vec<NuisanceFit>,
}

fn clamp(p: f64, clip: f64) -> f64 {
    p.clamp(clip, 1.0 - clip)
}

fn pick(p1: f64, a: u8) -> f64 {
    if a == 1 {
        p1
    } else {
        1.0 - p1
    }
}

fn sign(a: u8) -> f64 {
    if a == 1 {
        1.0
    } else {
        -1.0
    }
}

/// Floors `|δ|` at `floor` keeping its sign (zero counts as positive).
fn floor_delta(delta: &[f64], floor: f64) -> (Vec<f64>, Vec<usize>) {
    let mut flagged = Vec::new();
    let out = delta
        .iter()
        .enumerate()
        .map(|(l, &d)| {
            if d.abs() < floor {
                flagged.push(l);
                floor.copysign(if d == 0.0 { 1.0 } else { d })
            } else {
                d
            }
        })
        .collect();
    (out, flagged)
}

fn psi1_from(signed: &[[[f64; 2]; 2]], delta: &[f64]) -> Vec<[f64; 2]> {
    signed
        .iter()
        .zip(delta)
        .map(|(s, &d)| [(s[1][0] - s[0][0]) / d, (s[1][1] - s[0][1]) / d])
        .collect()
}

impl Nuisances {
    /// Fits every model with the configured design.
    pub fn fit(cells: &CellTable, cfg: &EstimationConfig) -> Result<Self, EstimateError> {
        Self::fit_with(cells, cfg, |_| cfg.design)
    }

    /// Fits with a per-model design choice.
    pub fn fit_with<F: Fn(ModelId) -> Design>(cells: &CellTable, cfg: &EstimationConfig, design: F) -> Result<Self, EstimateError> {
        if !cells.instrument {
            return Err(EstimateError::NoInstrument);
        }
        let total = cells.total();
        if total <= 0.0 {
            return Err(EstimateError::EmptySample);
        }
        for z in 0..2u8 {
            if cells.cells.iter().all(|c| c[z as usize][0].n + c[z as usize][1].n == 0.0) {
                return Err(EstimateError::EmptyInstrumentStratum { z });
            }
        }
        for a in 0..2u8 {
            if cells.cells.iter().all(|c| c[0][a as usize].n + c[1][a as usize].n == 0.0) {
                return Err(EstimateError::EmptyTreatmentStratum { a });
            }
        }
        let space = cells.space();
        let settings = cfg.glm_settings();
        let binary = cells.binary_outcome;
        let y_family = if binary { Family::Binomial } else { Family::Gaussian };
        let mut fits = Vec::new();
        let mut run = |id: ModelId, family: Family, stats: Vec<CellStats>| {
            let f = fit_glm(id, &space, &stats, design(id), family, &settings);
            let fitted = f.fitted.clone();
            fits.push(f);
            fitted
        };
        // indicator-response statistics from counts
        let binary_stats = |n: f64, k: f64| CellStats { n, sum: k, sumsq: k };
        let nl = cells.n_contexts();

        let z_fit = run(
            ModelId::ZGivenL,
            Family::Binomial,
            cells.cells.iter().map(|c| binary_stats(c[0][0].n + c[0][1].n + c[1][0].n + c[1][1].n, c[1][0].n + c[1][1].n)).collect(),
        );
        let mut p_a1_given_zl = vec![[0.0; 2]; nl];
        let mut signed_mean = vec![[[0.0; 2]; 2]; nl];
        for z in 0..2usize {
            let fit = run(
                ModelId::AGivenZl { z: z as u8 },
                Family::Binomial,
                cells.cells.iter().map(|c| binary_stats(c[z][0].n + c[z][1].n, c[z][1].n)).collect(),
            );
            for l in 0..nl {
                p_a1_given_zl[l][z] = fit[l];
            }
            for a in 0..2usize {
                // Binary Y: a=1 uses Y·I(A=1), a=0 uses 1 - Y·I(A=0); both in {0,1}.
                let stats = cells
                    .cells
                    .iter()
                    .map(|c| {
                        let n = c[z][0].n + c[z][1].n;
                        let s = c[z][a].sum;
                        let ss = c[z][a].sumsq;
                        match (binary, a) {
                            (true, 1) => binary_stats(n, s),
                            (true, _) => binary_stats(n, n - s),
                            (false, 1) => CellStats { n, sum: s, sumsq: ss },
                            (false, _) => CellStats { n, sum: -s, sumsq: ss },
                        }
                    })
                    .collect();
                let fit = run(ModelId::SignedOutcome { a: a as u8, z: z as u8 }, y_family, stats);
                for l in 0..nl {
                    signed_mean[l][z][a] = if binary && a == 0 { fit[l] - 1.0 } else { fit[l] };
                }
            }
        }
        let p_a1_given_l = run(
            ModelId::AGivenL,
            Family::Binomial,
            cells.cells.iter().map(|c| binary_stats(c[0][0].n + c[0][1].n + c[1][0].n + c[1][1].n, c[0][1].n + c[1][1].n)).collect(),
        );
        let mut mean_y_given_al = vec![[0.0; 2]; nl];
        for a in 0..2usize {
            let fit = run(
                ModelId::YGivenAl { a: a as u8 },
                y_family,
                cells
                    .cells
                    .iter()
                    .map(|c| CellStats { n: c[0][a].n + c[1][a].n, sum: c[0][a].sum + c[1][a].sum, sumsq: c[0][a].sumsq + c[1][a].sumsq })
                    .collect(),
            );
            for l in 0..nl {
                mean_y_given_al[l][a] = fit[l];
            }
        }
        let mean_y_given_l = run(
            ModelId::YGivenL,
            y_family,
            cells
                .cells
                .iter()
                .map(|c| {
                    c.iter().flatten().fold(CellStats::default(), |mut acc, s| {
                        acc.n += s.n;
                        acc.sum += s.sum;
                        acc.sumsq += s.sumsq;
                        acc
                    })
                })
                .collect(),
        );
        let p_l = (0..nl).map(|l| cells.n_l(l) / total).collect();
        let raw_delta: Vec<f64> = p_a1_given_zl.iter().map(|p| p[1] - p[0]).collect();
        let (delta, floored) = floor_delta(&raw_delta, cfg.delta_floor);
        if !floored.is_empty() {
            log::warn!("instrument strength floored at {} in contexts {:?}", cfg.delta_floor, floored);
        }
        let psi1 = psi1_from(&signed_mean, &delta);
        Ok(Nuisances {
            factor_levels: cells.factor_levels.clone(),
            clip: cfg.propensity_clip,
            p_l,
            p_z1_given_l: z_fit,
            p_a1_given_zl,
            signed_mean,
            p_a1_given_l,
            mean_y_given_al,
            mean_y_given_l,
            delta,
            psi1,
            floored,
            fits,
        })
    }

    /// The true nuisances of a known law. No clipping is applied.
    pub fn from_law(law: &ObservedLaw) -> Result<Self, EstimateError> {
        let pz = law.p_z1_given_l.clone().ok_or(EstimateError::NoInstrument)?;
        let nl = law.n_contexts();
        let signed_mean: Vec<[[f64; 2]; 2]> = (0..nl)
            .map(|l| {
                let s = |z, a| law.signed_outcome_mean(l, z, a);
                [[s(0, 0), s(0, 1)], [s(1, 0), s(1, 1)]]
            })
            .collect();
        let delta: Vec<f64> = (0..nl).map(|l| law.delta(l)).collect::<Result<_, _>>()?;
        let psi1 = psi1_from(&signed_mean, &delta);
        Ok(Nuisances {
            factor_levels: law.factor_levels.clone(),
            clip: 0.0,
            p_l: law.p_l.clone(),
            p_z1_given_l: pz,
            p_a1_given_zl: law.p_a1_given_zl.clone(),
            signed_mean,
            p_a1_given_l: (0..nl).map(|l| law.p_a_given_l(l, 1)).collect(),
            mean_y_given_al: (0..nl).map(|l| [law.mean_y_given_al(l, 0), law.mean_y_given_al(l, 1)]).collect(),
            mean_y_given_l: (0..nl).map(|l| law.mean_y_given_l(l)).collect(),
            delta,
            psi1,
            floored: Vec::new(),
            fits: Vec::new(),
        })
    }

    pub fn space(&self) -> ContextSpace {
        ContextSpace::new(self.factor_levels.clone())
    }

    pub fn n_contexts(&self) -> usize {
        self.p_l.len()
    }

    /// `f(z | l)`, clipped.
    pub fn f_z(&self, l: usize, z: u8) -> f64 {
        clamp(pick(self.p_z1_given_l[l], z), self.clip)
    }

    /// `P(A=a | z, l)`, clipped.
    pub fn p_a_given_zl(&self, l: usize, z: u8, a: u8) -> f64 {
        clamp(pick(self.p_a1_given_zl[l][z as usize], a), self.clip)
    }

    /// `P(A=a | l)`, clipped.
    pub fn p_a_given_l(&self, l: usize, a: u8) -> f64 {
        clamp(pick(self.p_a1_given_l[l], a), self.clip)
    }

    /// `P(A=a, L=l)`.
    pub fn p_al(&self, l: usize, a: u8) -> f64 {
        self.p_l[l] * pick(self.p_a1_given_l[l], a)
    }

    /// `E(Y | A=a, Z=z, l)` recovered from the signed regression.
    pub fn mean_y_given_azl(&self, l: usize, z: u8, a: u8) -> f64 {
        sign(a) * self.signed_mean[l][z as usize][a as usize] / self.p_a_given_zl(l, z, a)
    }

    /// `E(Z̃ A | z, l)` with `Z̃ = 2z-1` coding on `A`: `2 P(A=1|z,l) - 1`.
    pub fn signed_treatment_mean(&self, l: usize, z: u8) -> f64 {
        2.0 * self.p_a1_given_zl[l][z as usize] - 1.0
    }

    pub fn psi1(&self, a: u8, l: usize) -> f64 {
        self.psi1[l][a as usize]
    }

    pub fn psi1_table(&self) -> Psi1Table {
        Psi1Table(self.psi1.clone())
    }

    /// Plug-in `E(Y^a | A=intent, l)`.
    pub fn cmgn(&self, a: u8, intent: u8, l: usize) -> f64 {
        if a == intent {
            return self.mean_y_given_al[l][a as usize];
        }
        (self.psi1(a, l) - self.mean_y_given_al[l][a as usize] * self.p_a_given_l(l, a)) / self.p_a_given_l(l, intent)
    }

    /// Plug-in `E(Y^a | A=intent, l, z)`.
    pub fn cmgn_z(&self, a: u8, intent: u8, l: usize, z: u8) -> f64 {
        if a == intent {
            return self.mean_y_given_azl(l, z, a);
        }
        (self.psi1(a, l) - self.mean_y_given_azl(l, z, a) * self.p_a_given_zl(l, z, a)) / self.p_a_given_zl(l, z, intent)
    }

    pub fn any_separation(&self) -> bool {
        self.fits.iter().any(|f| f.separation)
    }

    pub fn all_converged(&self) -> bool {
        self.fits.iter().all(|f| f.converged)
    }
}

/// Floored instrument strength per context plus the floored contexts.
pub fn estimate_delta(train: &Dataset, cfg: &EstimationConfig) -> Result<(Vec<f64>, Vec<usize>), EstimateError> {
    let n = Nuisances::fit(&CellTable::from_dataset(train)?, cfg)?;
    Ok((n.delta, n.floored))
}

/// `ψ̂₁` from the four signed regressions and a given `δ̂`.
pub fn estimate_psi1(train: &Dataset, delta_hat: &[f64], cfg: &EstimationConfig) -> Result<Psi1Table, EstimateError> {
    let n = Nuisances::fit(&CellTable::from_dataset(train)?, cfg)?;
    if delta_hat.len() != n.n_contexts() {
        return Err(EstimateError::InvalidConfig("delta table does not match the context space".into()));
    }
    Ok(Psi1Table(psi1_from(&n.signed_mean, delta_hat)))
}
