//! Decision rules mapping (intent, context, instrument) to a treatment.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{Context, ContextSpace};

/// Differences smaller than this are treated as exact ties.
pub const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum RegimeError {
    #[error("regime needs the instrument value")]
    MissingInstrument,
    #[error("context {0} is outside the regime's context space")]
    UnknownContext(Context),
    #[error("regime table is not total: missing key {0}")]
    MissingKey(String),
    #[error("duplicate regime key {0}")]
    DuplicateKey(String),
    #[error("assigned treatment {0} not in {{0,1}}")]
    BadAssignment(u8),
    #[error("observed regime carries no table")]
    ObservedWithTable,
    #[error("{kind} regime must be keyed on {expected}")]
    WrongKeying { kind: RegimeKind, expected: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RegimeKind {
    Observed,
    #[serde(rename = "optimal_L")]
    OptimalL,
    #[serde(rename = "superoptimal_LA")]
    SuperoptimalLA,
    #[serde(rename = "superoptimal_LAZ")]
    SuperoptimalLAZ,
    ExplicitTable,
}

impl fmt::Display for RegimeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RegimeKind::Observed => "observed",
            RegimeKind::OptimalL => "optimal_L",
            RegimeKind::SuperoptimalLA => "superoptimal_LA",
            RegimeKind::SuperoptimalLAZ => "superoptimal_LAZ",
            RegimeKind::ExplicitTable => "explicit_table",
        };
        f.write_str(s)
    }
}

/// One row of a regime table as it appears on disk.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegimeEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intent: Option<u8>,
    pub context: Context,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instrument: Option<u8>,
    pub assign: u8,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RegimeDoc {
    kind: RegimeKind,
    factor_levels: Vec<usize>,
    #[serde(default)]
    uses_intent: bool,
    #[serde(default)]
    uses_instrument: bool,
    #[serde(default)]
    entries: Vec<RegimeEntry>,
}

/// A total decision table over the declared context space.
///
/// Internally dense: the slot for `(context, intent, instrument)` is
/// `(ctx * n_intent + intent) * n_instrument + instrument`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegimeDoc", into = "RegimeDoc")]
pub struct Regime {
    kind: RegimeKind,
    space: ContextSpace,
    uses_intent: bool,
    uses_instrument: bool,
    table: Vec<u8>,
}

impl Regime {
    /// The factual regime `A^{g+} = A`.
    pub fn observed(space: ContextSpace) -> Self {
        Regime { kind: RegimeKind::Observed, space, uses_intent: true, uses_instrument: false, table: Vec::new() }
    }

    /// Builds a table by evaluating `rule(ctx_index, intent, instrument)` at every key.
    pub fn from_fn<F>(kind: RegimeKind, space: ContextSpace, uses_intent: bool, uses_instrument: bool, mut rule: F) -> Self
    where
        F: FnMut(usize, u8, u8) -> u8,
    {
        assert!(kind != RegimeKind::Observed, "use Regime::observed");
        let ni = if uses_intent { 2 } else { 1 };
        let nz = if uses_instrument { 2 } else { 1 };
        let mut table = Vec::with_capacity(space.len() * ni * nz);
        for c in 0..space.len() {
            for i in 0..ni {
                for z in 0..nz {
                    let v = rule(c, i as u8, z as u8);
                    assert!(v <= 1, "assignment must be binary");
                    table.push(v);
                }
            }
        }
        Regime { kind, space, uses_intent, uses_instrument, table }
    }

    /// Context-only rule, the shape of an L-optimal regime.
    pub fn from_context_fn<F: FnMut(usize) -> u8>(kind: RegimeKind, space: ContextSpace, mut rule: F) -> Self {
        Self::from_fn(kind, space, false, false, |c, _, _| rule(c))
    }

    /// A constant assignment.
    pub fn constant(space: ContextSpace, a: u8) -> Self {
        Self::from_context_fn(RegimeKind::ExplicitTable, space, |_| a)
    }

    pub fn kind(&self) -> RegimeKind {
        self.kind
    }

    pub fn space(&self) -> &ContextSpace {
        &self.space
    }

    pub fn uses_intent(&self) -> bool {
        self.uses_intent
    }

    pub fn uses_instrument(&self) -> bool {
        self.uses_instrument
    }

    /// Assignment for natural treatment `intent` in context `ctx`.
    pub fn assign(&self, intent: u8, ctx: usize, instrument: Option<u8>) -> Result<u8, RegimeError> {
        if self.kind == RegimeKind::Observed {
            return Ok(intent);
        }
        let z = if self.uses_instrument { instrument.ok_or(RegimeError::MissingInstrument)? } else { 0 };
        if ctx >= self.space.len() {
            return Err(RegimeError::UnknownContext(Context(vec![ctx as u32])));
        }
        Ok(self.table[self.slot(ctx, intent, z)])
    }

    /// Same as [`Regime::assign`] but keyed by a context value.
    pub fn assign_context(&self, intent: u8, ctx: &Context, instrument: Option<u8>) -> Result<u8, RegimeError> {
        if !self.space.contains(ctx) {
            return Err(RegimeError::UnknownContext(ctx.clone()));
        }
        self.assign(intent, self.space.index(ctx), instrument)
    }

    fn slot(&self, ctx: usize, intent: u8, z: u8) -> usize {
        let ni = if self.uses_intent { 2 } else { 1 };
        let nz = if self.uses_instrument { 2 } else { 1 };
        let i = if self.uses_intent { intent as usize } else { 0 };
        let z = if self.uses_instrument { z as usize } else { 0 };
        (ctx * ni + i) * nz + z
    }

    pub fn entries(&self) -> Vec<RegimeEntry> {
        if self.kind == RegimeKind::Observed {
            return Vec::new();
        }
        let mut out = Vec::with_capacity(self.table.len());
        for c in 0..self.space.len() {
            let context = self.space.context(c);
            for i in 0..(if self.uses_intent { 2 } else { 1 }) {
                for z in 0..(if self.uses_instrument { 2 } else { 1 }) {
                    out.push(RegimeEntry {
                        intent: self.uses_intent.then_some(i),
                        context: context.clone(),
                        instrument: self.uses_instrument.then_some(z),
                        assign: self.table[self.slot(c, i, z)],
                    });
                }
            }
        }
        out
    }

    /// Number of keys at which two regimes of the same shape disagree.
    pub fn disagreements(&self, other: &Regime) -> usize {
        let mut n = 0;
        for c in 0..self.space.len() {
            for i in 0..2u8 {
                for z in 0..2u8 {
                    let a = self.assign(i, c, Some(z)).ok();
                    let b = other.assign(i, c, Some(z)).ok();
                    if a != b {
                        n += 1;
                    }
                }
            }
        }
        n
    }
}

impl From<Regime> for RegimeDoc {
    fn from(r: Regime) -> Self {
        RegimeDoc {
            kind: r.kind,
            factor_levels: r.space.radices().to_vec(),
            uses_intent: r.uses_intent,
            uses_instrument: r.uses_instrument,
            entries: r.entries(),
        }
    }
}

impl TryFrom<RegimeDoc> for Regime {
    type Error = RegimeError;

    fn try_from(doc: RegimeDoc) -> Result<Self, Self::Error> {
        let space = ContextSpace::new(doc.factor_levels);
        if doc.kind == RegimeKind::Observed {
            if !doc.entries.is_empty() {
                return Err(RegimeError::ObservedWithTable);
            }
            return Ok(Regime::observed(space));
        }
        let expected = match doc.kind {
            RegimeKind::OptimalL => Some((false, false, "(l)")),
            RegimeKind::SuperoptimalLA => Some((true, false, "(a', l)")),
            RegimeKind::SuperoptimalLAZ => Some((true, true, "(a', l, z)")),
            _ => None,
        };
        if let Some((i, z, name)) = expected {
            if (i, z) != (doc.uses_intent, doc.uses_instrument) {
                return Err(RegimeError::WrongKeying { kind: doc.kind, expected: name });
            }
        }
        let mut map: BTreeMap<(usize, u8, u8), u8> = BTreeMap::new();
        for e in &doc.entries {
            if e.assign > 1 {
                return Err(RegimeError::BadAssignment(e.assign));
            }
            if !space.contains(&e.context) {
                return Err(RegimeError::UnknownContext(e.context.clone()));
            }
            let key = (space.index(&e.context), e.intent.unwrap_or(0), e.instrument.unwrap_or(0));
            if e.intent.is_some() != doc.uses_intent || e.instrument.is_some() != doc.uses_instrument {
                return Err(RegimeError::MissingKey(format!("{:?}", e)));
            }
            if map.insert(key, e.assign).is_some() {
                return Err(RegimeError::DuplicateKey(format!("{} {:?} {:?}", e.context, e.intent, e.instrument)));
            }
        }
        let mut missing = None;
        let r = Regime::from_fn(doc.kind, space.clone(), doc.uses_intent, doc.uses_instrument, |c, i, z| {
            match map.get(&(c, i, z)) {
                Some(&v) => v,
                None => {
                    missing.get_or_insert_with(|| format!("context {} intent {i} instrument {z}", space.context(c)));
                    0
                }
            }
        });
        match missing {
            Some(k) => Err(RegimeError::MissingKey(k)),
            None => Ok(r),
        }
    }
}

/// Closed interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalBound {
    pub lo: f64,
    pub hi: f64,
}

impl IntervalBound {
    pub fn new(lo: f64, hi: f64) -> Self {
        assert!(lo <= hi || (lo - hi).abs() < 1e-9, "interval lo {lo} > hi {hi}");
        IntervalBound { lo: lo.min(hi), hi: hi.max(lo) }
    }

    pub fn point(x: f64) -> Self {
        IntervalBound { lo: x, hi: x }
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn contains(&self, x: f64, tol: f64) -> bool {
        x >= self.lo - tol && x <= self.hi + tol
    }

    pub fn overlaps(&self, other: &IntervalBound) -> bool {
        self.lo <= other.hi && other.lo <= self.hi
    }
}

impl fmt::Display for IntervalBound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:.4}, {:.4}]", self.lo, self.hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn observed_returns_intent() {
        let r = Regime::observed(ContextSpace::new(vec![3]));
        for c in 0..3 {
            assert_eq!(r.assign(0, c, None), Ok(0));
            assert_eq!(r.assign(1, c, Some(1)), Ok(1));
        }
    }

    #[test]
    fn laz_requires_instrument() {
        let r = Regime::from_fn(RegimeKind::SuperoptimalLAZ, ContextSpace::new(vec![]), true, true, |_, i, z| i ^ z);
        assert_eq!(r.assign(1, 0, None), Err(RegimeError::MissingInstrument));
        assert_eq!(r.assign(1, 0, Some(1)), Ok(0));
        assert_eq!(r.assign(0, 0, Some(1)), Ok(1));
    }

    #[test]
    fn json_round_trip() {
        let r = Regime::from_fn(RegimeKind::SuperoptimalLA, ContextSpace::new(vec![2, 2]), true, false, |c, i, _| ((c as u8) + i) % 2);
        let s = serde_json::to_string(&r).unwrap();
        let back: Regime = serde_json::from_str(&s).unwrap();
        assert_eq!(r, back);
    }

    #[test]
    fn rejects_partial_table() {
        let doc = r#"{"kind":"optimal_L","factor_levels":[2],"entries":[{"context":[0],"assign":1}]}"#;
        let err = serde_json::from_str::<Regime>(doc).unwrap_err();
        assert!(err.to_string().contains("not total"));
    }

    #[test]
    fn rejects_table_on_observed() {
        let doc = r#"{"kind":"observed","factor_levels":[],"entries":[{"context":[],"assign":1}]}"#;
        assert!(serde_json::from_str::<Regime>(doc).is_err());
    }
}
