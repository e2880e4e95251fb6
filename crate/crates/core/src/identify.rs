//! Identification functionals evaluated on a known observed-data law.
//!
//! Everything here is exact: given `P(L)`, `P(Z|L)`, `P(A|Z,L)` and
//! `E(Y|A,Z,L)` it returns the identified counterfactual quantities with no
//! sampling error. Feeding empirical frequencies gives the saturated plug-in.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Context, ContextSpace, Dataset};
use crate::regime::{Regime, RegimeKind, TIE_TOL};

#[derive(Debug, Error, PartialEq)]
pub enum IdentifyError {
    #[error("operation needs an instrument but the law has none")]
    NoInstrument,
    #[error("instrument is irrelevant in context {context}: delta = {delta}")]
    IvRelevance { context: usize, delta: f64 },
    #[error("positivity fails: P(A={natural} | L) = 0 in context {context}")]
    Positivity { context: usize, natural: u8 },
    #[error("positivity fails: P(A={natural} | L, Z={instrument}) = 0 in context {context}")]
    InstrumentPositivity { context: usize, natural: u8, instrument: u8 },
    #[error("no records with received treatment {a}, intent {intent} in context {context}")]
    EmptyCell { a: u8, intent: u8, context: Context },
    #[error("natural treatment was not recorded; intent-conditional means are unavailable")]
    NaturalValueUnavailable,
    #[error("{0}")]
    Unsupported(String),
}

/// Law of the observables. Tables are indexed by context; without an
/// instrument only the `z = 0` slots are meaningful.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservedLaw {
    pub factor_levels: Vec<usize>,
    pub p_l: Vec<f64>,
    /// `P(Z=1 | l)`, absent without an instrument.
    pub p_z1_given_l: Option<Vec<f64>>,
    /// `P(A=1 | z, l)` indexed `[l][z]`.
    pub p_a1_given_zl: Vec<[f64; 2]>,
    /// `E(Y | A=a, Z=z, l)` indexed `[l][z][a]`; zero where the cell is empty.
    pub mean_y_given_azl: Vec<[[f64; 2]; 2]>,
}

impl ObservedLaw {
    /// Exact empirical frequencies of an observational dataset.
    pub fn from_dataset(ds: &Dataset) -> Result<Self, IdentifyError> {
        let obs = ds
            .observations()
            .ok_or_else(|| IdentifyError::Unsupported("trial records have no observational law".into()))?;
        let space = ds.schema().context_space();
        let rows = obs.iter().map(|o| (space.index(&o.context), o.z.unwrap_or(0), o.a, o.y, 1.0));
        Ok(Self::from_weighted_rows(space.radices().to_vec(), ds.schema().instrument, rows))
    }

    /// Weighted empirical law from `(context, z, a, y, weight)` rows.
    pub fn from_weighted_rows<I>(factor_levels: Vec<usize>, instrument: bool, rows: I) -> Self
    where
        I: IntoIterator<Item = (usize, u8, u8, f64, f64)>,
    {
        let nl: usize = factor_levels.iter().product();
        let mut n = vec![[[0.0f64; 2]; 2]; nl];
        let mut s = vec![[[0.0f64; 2]; 2]; nl];
        let mut total = 0.0;
        for (l, z, a, y, w) in rows {
            n[l][z as usize][a as usize] += w;
            s[l][z as usize][a as usize] += w * y;
            total += w;
        }
        let mut p_l = vec![0.0; nl];
        let mut p_z1 = vec![0.0; nl];
        let mut p_a1 = vec![[0.0; 2]; nl];
        let mut mean = vec![[[0.0; 2]; 2]; nl];
        for l in 0..nl {
            let nz = [n[l][0][0] + n[l][0][1], n[l][1][0] + n[l][1][1]];
            let nlt = nz[0] + nz[1];
            p_l[l] = if total > 0.0 { nlt / total } else { 0.0 };
            p_z1[l] = if nlt > 0.0 { nz[1] / nlt } else { 0.0 };
            for z in 0..2 {
                p_a1[l][z] = if nz[z] > 0.0 { n[l][z][1] / nz[z] } else { 0.0 };
                for a in 0..2 {
                    mean[l][z][a] = if n[l][z][a] > 0.0 { s[l][z][a] / n[l][z][a] } else { 0.0 };
                }
            }
            if !instrument {
                p_a1[l][1] = p_a1[l][0];
                mean[l][1] = mean[l][0];
            }
        }
        ObservedLaw {
            factor_levels,
            p_l,
            p_z1_given_l: instrument.then_some(p_z1),
            p_a1_given_zl: p_a1,
            mean_y_given_azl: mean,
        }
    }

    pub fn space(&self) -> ContextSpace {
        ContextSpace::new(self.factor_levels.clone())
    }

    pub fn n_contexts(&self) -> usize {
        self.p_l.len()
    }

    pub fn has_instrument(&self) -> bool {
        self.p_z1_given_l.is_some()
    }

    /// `f(z | l)`; without an instrument all mass sits on `z = 0`.
    pub fn p_z(&self, l: usize, z: u8) -> f64 {
        match &self.p_z1_given_l {
            Some(p) => {
                if z == 1 {
                    p[l]
                } else {
                    1.0 - p[l]
                }
            }
            None => f64::from(u8::from(z == 0)),
        }
    }

    pub fn p_a_given_zl(&self, l: usize, z: u8, a: u8) -> f64 {
        let p1 = self.p_a1_given_zl[l][z as usize];
        if a == 1 {
            p1
        } else {
            1.0 - p1
        }
    }

    /// `P(A = a | l)`.
    pub fn p_a_given_l(&self, l: usize, a: u8) -> f64 {
        (0..2).map(|z| self.p_z(l, z) * self.p_a_given_zl(l, z, a)).sum()
    }

    /// `P(A = a, L = l)`.
    pub fn p_al(&self, l: usize, a: u8) -> f64 {
        self.p_l[l] * self.p_a_given_l(l, a)
    }

    /// `E(Y | A = a, l)`; zero when the cell is empty.
    pub fn mean_y_given_al(&self, l: usize, a: u8) -> f64 {
        let pa = self.p_a_given_l(l, a);
        if pa <= 0.0 {
            return 0.0;
        }
        (0..2u8)
            .map(|z| self.p_z(l, z) * self.p_a_given_zl(l, z, a) * self.mean_y_given_azl[l][z as usize][a as usize])
            .sum::<f64>()
            / pa
    }

    /// `E(Y | l)`.
    pub fn mean_y_given_l(&self, l: usize) -> f64 {
        (0..2u8).map(|a| self.p_a_given_l(l, a) * self.mean_y_given_al(l, a)).sum()
    }

    /// `E(Y)`.
    pub fn mean_y(&self) -> f64 {
        (0..self.n_contexts()).map(|l| self.p_l[l] * self.mean_y_given_l(l)).sum()
    }

    /// Instrument strength `P(A=1|Z=1,l) - P(A=1|Z=0,l)`.
    pub fn delta(&self, l: usize) -> Result<f64, IdentifyError> {
        if !self.has_instrument() {
            return Err(IdentifyError::NoInstrument);
        }
        Ok(self.p_a1_given_zl[l][1] - self.p_a1_given_zl[l][0])
    }

    /// `E((2A-1) Y I[A=a] | z, l)`.
    pub fn signed_outcome_mean(&self, l: usize, z: u8, a: u8) -> f64 {
        let sign = if a == 1 { 1.0 } else { -1.0 };
        sign * self.p_a_given_zl(l, z, a) * self.mean_y_given_azl[l][z as usize][a as usize]
    }

    /// The IV functional equal to `E(Y^a | L = l)` under the IV conditions.
    pub fn psi1(&self, a: u8, l: usize) -> Result<f64, IdentifyError> {
        let delta = self.delta(l)?;
        if delta.abs() <= 1e-12 || !delta.is_finite() {
            return Err(IdentifyError::IvRelevance { context: l, delta });
        }
        Ok((self.signed_outcome_mean(l, 1, a) - self.signed_outcome_mean(l, 0, a)) / delta)
    }

    pub fn psi1_table(&self) -> Result<Psi1Table, IdentifyError> {
        (0..self.n_contexts())
            .map(|l| Ok([self.psi1(0, l)?, self.psi1(1, l)?]))
            .collect::<Result<Vec<_>, _>>()
            .map(Psi1Table)
    }
}

/// `ψ₁(a, l)` indexed `[l][a]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psi1Table(pub Vec<[f64; 2]>);

impl Psi1Table {
    pub fn get(&self, a: u8, l: usize) -> f64 {
        self.0[l][a as usize]
    }
}

/// `E(Y^a | A = a', L = l)`: the observed mean when `a = a'`, otherwise the
/// cross-world mean recovered from `E(Y^a | l)`.
pub fn counterfactual_mean_given_natural(
    law: &ObservedLaw,
    psi1: &Psi1Table,
    a: u8,
    intent: u8,
    l: usize,
) -> Result<f64, IdentifyError> {
    let p_intent = law.p_a_given_l(l, intent);
    if p_intent <= 0.0 {
        return Err(IdentifyError::Positivity { context: l, natural: intent });
    }
    if a == intent {
        return Ok(law.mean_y_given_al(l, a));
    }
    Ok((psi1.get(a, l) - law.mean_y_given_al(l, a) * law.p_a_given_l(l, a)) / p_intent)
}

/// `E(Y^a | A = a', L = l)` indexed `[l][a][a']`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmgnTable(pub Vec<[[f64; 2]; 2]>);

impl CmgnTable {
    pub fn get(&self, a: u8, intent: u8, l: usize) -> f64 {
        self.0[l][a as usize][intent as usize]
    }

    /// Effect among those whose natural choice is `intent`.
    pub fn effect(&self, intent: u8, l: usize) -> f64 {
        self.get(1, intent, l) - self.get(0, intent, l)
    }
}

pub fn cmgn_table(law: &ObservedLaw, psi1: &Psi1Table) -> Result<CmgnTable, IdentifyError> {
    let mut out = Vec::with_capacity(law.n_contexts());
    for l in 0..law.n_contexts() {
        let mut t = [[0.0; 2]; 2];
        for a in 0..2u8 {
            for i in 0..2u8 {
                t[a as usize][i as usize] = counterfactual_mean_given_natural(law, psi1, a, i, l)?;
            }
        }
        out.push(t);
    }
    Ok(CmgnTable(out))
}

/// Keep the natural choice `a'` iff `E(Y|l) >= ψ₁(1-a', l)`.
pub fn superoptimal_rule(law: &ObservedLaw, psi1: &Psi1Table) -> Result<Regime, IdentifyError> {
    superoptimal_from_means(law.space(), &(0..law.n_contexts()).map(|l| law.mean_y_given_l(l)).collect::<Vec<_>>(), psi1)
}

/// The same rule from any estimate of `E(Y|l)` and `ψ₁`.
pub fn superoptimal_from_means(space: ContextSpace, mean_y_given_l: &[f64], psi1: &Psi1Table) -> Result<Regime, IdentifyError> {
    Ok(Regime::from_fn(RegimeKind::SuperoptimalLA, space, true, false, |l, i, _| {
        if mean_y_given_l[l] >= psi1.get(1 - i, l) - TIE_TOL {
            i
        } else {
            1 - i
        }
    }))
}

/// `argmax_a ψ₁(a, l)`, ties to treatment 1.
pub fn optimal_rule(space: ContextSpace, psi1: &Psi1Table) -> Regime {
    Regime::from_context_fn(RegimeKind::OptimalL, space, |l| u8::from(psi1.get(1, l) >= psi1.get(0, l) - TIE_TOL))
}

/// `E(Y^a | A = a', L = l, Z = z)` with `E(Y^a | l, z) = ψ₁(a, l)`.
pub fn instrument_cmgn(law: &ObservedLaw, psi1: &Psi1Table, a: u8, intent: u8, l: usize, z: u8) -> Result<f64, IdentifyError> {
    if !law.has_instrument() {
        return Err(IdentifyError::NoInstrument);
    }
    let p_intent = law.p_a_given_zl(l, z, intent);
    if p_intent <= 0.0 {
        return Err(IdentifyError::InstrumentPositivity { context: l, natural: intent, instrument: z });
    }
    let m = |x: u8| law.mean_y_given_azl[l][z as usize][x as usize];
    if a == intent {
        return Ok(m(a));
    }
    Ok((psi1.get(a, l) - m(a) * law.p_a_given_zl(l, z, a)) / p_intent)
}

/// Argmax of [`instrument_cmgn`] per `(a', l, z)`, ties keep `a'`.
pub fn lz_superoptimal_rule(law: &ObservedLaw, psi1: &Psi1Table) -> Result<Regime, IdentifyError> {
    let mut err = None;
    let r = Regime::from_fn(RegimeKind::SuperoptimalLAZ, law.space(), true, true, |l, i, z| {
        let keep = instrument_cmgn(law, psi1, i, i, l, z);
        let flip = instrument_cmgn(law, psi1, 1 - i, i, l, z);
        match (keep, flip) {
            (Ok(k), Ok(f)) => {
                if k >= f - TIE_TOL {
                    i
                } else {
                    1 - i
                }
            }
            (Err(e), _) | (_, Err(e)) => {
                err.get_or_insert(e);
                i
            }
        }
    });
    match err {
        Some(e) => Err(e),
        None => Ok(r),
    }
}

/// Identified marginal value `E(Y^g)` of any regime on a known law.
pub fn identified_value(law: &ObservedLaw, psi1: &Psi1Table, regime: &Regime) -> Result<f64, IdentifyError> {
    let mut v = 0.0;
    for l in 0..law.n_contexts() {
        if law.p_l[l] <= 0.0 {
            continue;
        }
        for i in 0..2u8 {
            if regime.uses_instrument() {
                for z in 0..2u8 {
                    let w = law.p_l[l] * law.p_z(l, z) * law.p_a_given_zl(l, z, i);
                    if w > 0.0 {
                        let g = regime.assign(i, l, Some(z)).map_err(|e| IdentifyError::Unsupported(e.to_string()))?;
                        v += w * instrument_cmgn(law, psi1, g, i, l, z)?;
                    }
                }
            } else {
                let w = law.p_al(l, i);
                if w > 0.0 {
                    let g = regime.assign(i, l, None).map_err(|e| IdentifyError::Unsupported(e.to_string()))?;
                    v += w * counterfactual_mean_given_natural(law, psi1, g, i, l)?;
                }
            }
        }
    }
    Ok(v)
}

/// Per-context instruction relating the superoptimal rule to the optimal one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "u8", try_from = "u8")]
pub enum Gamma {
    /// Effects share a sign: follow the optimal rule.
    Follow = 0,
    /// Treat iff the natural choice is to treat.
    KeepIntent = 1,
    /// Do the opposite of the natural choice.
    FlipIntent = 2,
}

impl Gamma {
    pub fn instruction(self) -> &'static str {
        match self {
            Gamma::Follow => "follow",
            Gamma::KeepIntent => "keep_intent",
            Gamma::FlipIntent => "flip_intent",
        }
    }

    /// Classifies the two intent-specific effects.
    pub fn classify(effect_if_treat: f64, effect_if_not: f64) -> Gamma {
        let nonneg = |x: f64| x >= -TIE_TOL;
        match (nonneg(effect_if_treat), nonneg(effect_if_not)) {
            (true, false) => Gamma::KeepIntent,
            (false, true) => Gamma::FlipIntent,
            _ => Gamma::Follow,
        }
    }

    /// Treatment assigned to natural choice `intent` given the optimal choice.
    pub fn apply(self, intent: u8, optimal: u8) -> u8 {
        match self {
            Gamma::Follow => optimal,
            Gamma::KeepIntent => intent,
            Gamma::FlipIntent => 1 - intent,
        }
    }
}

impl From<Gamma> for u8 {
    fn from(g: Gamma) -> u8 {
        g as u8
    }
}

impl TryFrom<u8> for Gamma {
    type Error = String;

    fn try_from(v: u8) -> Result<Self, Self::Error> {
        match v {
            0 => Ok(Gamma::Follow),
            1 => Ok(Gamma::KeepIntent),
            2 => Ok(Gamma::FlipIntent),
            x => Err(format!("gamma {x} not in {{0,1,2}}")),
        }
    }
}

pub fn gamma_map(cmgn: &CmgnTable) -> Vec<Gamma> {
    (0..cmgn.0.len()).map(|l| Gamma::classify(cmgn.effect(1, l), cmgn.effect(0, l))).collect()
}

/// Rebuilds the superoptimal table from the optimal rule and the gamma map.
pub fn reconstruct_superoptimal(gamma: &[Gamma], optimal: &Regime) -> Regime {
    Regime::from_fn(RegimeKind::SuperoptimalLA, optimal.space().clone(), true, false, |l, i, _| {
        let opt = optimal.assign(i, l, None).expect("optimal rule is total");
        gamma[l].apply(i, opt)
    })
}

/// `E(Y | A* = a, A = a', L = l)` from preference-trial records.
pub fn preference_trial_mean(ds: &Dataset, a: u8, intent: u8, context: &Context) -> Result<f64, IdentifyError> {
    let recs = ds
        .trial_records()
        .ok_or_else(|| IdentifyError::Unsupported("observational data carry no received-treatment column".into()))?;
    if recs.iter().any(|r| r.a.is_none()) {
        return Err(IdentifyError::NaturalValueUnavailable);
    }
    let (mut n, mut s) = (0usize, 0.0);
    for r in recs.iter().filter(|r| r.a_star == a && r.a == Some(intent) && &r.context == context) {
        n += 1;
        s += r.y;
    }
    if n == 0 {
        return Err(IdentifyError::EmptyCell { a, intent, context: context.clone() });
    }
    Ok(s / n as f64)
}
