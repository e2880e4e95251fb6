//! Observations, datasets and the CSV format they travel in.
//!
//! A dataset is a homogeneous list of rows, either plain observations
//! `(z?, l, a, y)` or preference-trial records that additionally carry the
//! received treatment `a_star` and the randomization arm. Covariates are
//! categorical (finite levels) or bounded reals; every table in the crate is
//! keyed on the categorical projection, the [`Context`].

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Column names with a fixed meaning. Every other column is a covariate.
pub const RESERVED_COLUMNS: [&str; 5] = ["z", "a", "a_star", "arm", "y"];

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset has no rows")]
    Empty,
    #[error("invalid dataset: {}", format_row_errors(.0))]
    Invalid(Vec<RowError>),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),
}

fn format_row_errors(errs: &[RowError]) -> String {
    let shown: Vec<String> = errs.iter().take(5).map(|e| e.to_string()).collect();
    if errs.len() > 5 {
        format!("{} (and {} more)", shown.join("; "), errs.len() - 5)
    } else {
        shown.join("; ")
    }
}

/// One validation failure. `row` is the 0-based data row (header excluded);
/// `None` for table-level problems such as a missing column.
#[derive(Debug, Clone, PartialEq)]
pub struct RowError {
    pub row: Option<usize>,
    pub column: String,
    pub message: String,
}

impl fmt::Display for RowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.row {
            Some(r) => write!(f, "row {r}, column `{}`: {}", self.column, self.message),
            None => write!(f, "column `{}`: {}", self.column, self.message),
        }
    }
}

/// Level indices of the categorical covariates, in schema order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Context(pub Vec<u32>);

impl Context {
    pub fn empty() -> Self {
        Context(Vec::new())
    }
}

impl fmt::Display for Context {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "∅");
        }
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum CovariateKind {
    Categorical { levels: Vec<String> },
    Real { min: f64, max: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Covariate {
    pub name: String,
    #[serde(flatten)]
    pub kind: CovariateKind,
}

impl Covariate {
    pub fn categorical<S: Into<String>>(name: S, levels: &[&str]) -> Self {
        Covariate {
            name: name.into(),
            kind: CovariateKind::Categorical {
                levels: levels.iter().map(|s| s.to_string()).collect(),
            },
        }
    }

    pub fn real<S: Into<String>>(name: S, min: f64, max: f64) -> Self {
        Covariate { name: name.into(), kind: CovariateKind::Real { min, max } }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    Observational,
    PreferenceTrial,
}

/// Declared column layout of a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    pub covariates: Vec<Covariate>,
    pub instrument: bool,
    pub row_kind: RowKind,
}

impl Schema {
    pub fn new(covariates: Vec<Covariate>, instrument: bool, row_kind: RowKind) -> Self {
        Schema { covariates, instrument, row_kind }
    }

    /// Level counts of the categorical covariates, in order.
    pub fn factor_levels(&self) -> Vec<usize> {
        self.covariates
            .iter()
            .filter_map(|c| match &c.kind {
                CovariateKind::Categorical { levels } => Some(levels.len()),
                CovariateKind::Real { .. } => None,
            })
            .collect()
    }

    pub fn categorical(&self) -> impl Iterator<Item = (&str, &[String])> {
        self.covariates.iter().filter_map(|c| match &c.kind {
            CovariateKind::Categorical { levels } => Some((c.name.as_str(), levels.as_slice())),
            CovariateKind::Real { .. } => None,
        })
    }

    pub fn n_real(&self) -> usize {
        self.covariates.iter().filter(|c| matches!(c.kind, CovariateKind::Real { .. })).count()
    }

    pub fn context_space(&self) -> ContextSpace {
        ContextSpace::new(self.factor_levels())
    }

    /// Infers a schema from a raw table: every non-reserved column becomes a
    /// categorical covariate whose levels are the distinct values seen
    /// (numeric order when all values parse as numbers, otherwise lexical).
    pub fn infer(raw: &RawTable) -> Schema {
        let mut covariates = Vec::new();
        for (j, h) in raw.headers.iter().enumerate() {
            if RESERVED_COLUMNS.contains(&h.as_str()) {
                continue;
            }
            let distinct: BTreeSet<&str> = raw.records.iter().map(|r| r[j].trim()).collect();
            let mut levels: Vec<String> = distinct.into_iter().map(str::to_string).collect();
            if levels.iter().all(|s| s.parse::<f64>().is_ok()) {
                levels.sort_by(|x, y| {
                    let (x, y) = (x.parse::<f64>().unwrap(), y.parse::<f64>().unwrap());
                    x.total_cmp(&y)
                });
            }
            covariates.push(Covariate { name: h.clone(), kind: CovariateKind::Categorical { levels } });
        }
        let has = |name: &str| raw.headers.iter().any(|h| h == name);
        let row_kind = if has("a_star") || has("arm") {
            RowKind::PreferenceTrial
        } else {
            RowKind::Observational
        };
        Schema { covariates, instrument: has("z"), row_kind }
    }

    /// Parses a context from covariate level names keyed by covariate name.
    pub fn context_from_names(&self, values: &BTreeMap<String, String>) -> Result<Context, RowError> {
        let mut idx = Vec::new();
        for (name, levels) in self.categorical() {
            let Some(v) = values.get(name) else {
                return Err(RowError { row: None, column: name.to_string(), message: "missing covariate".into() });
            };
            match levels.iter().position(|l| l == v) {
                Some(p) => idx.push(p as u32),
                None => {
                    return Err(RowError {
                        row: None,
                        column: name.to_string(),
                        message: format!("unknown level `{v}`"),
                    })
                }
            }
        }
        Ok(Context(idx))
    }

    /// Level names of a context, keyed by covariate name.
    pub fn context_names(&self, ctx: &Context) -> BTreeMap<String, String> {
        self.categorical()
            .zip(ctx.0.iter())
            .map(|((name, levels), &i)| (name.to_string(), levels[i as usize].clone()))
            .collect()
    }
}

/// Mixed-radix enumeration of the categorical context space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ContextSpace {
    radices: Vec<usize>,
}

impl ContextSpace {
    pub fn new(radices: Vec<usize>) -> Self {
        ContextSpace { radices }
    }

    pub fn len(&self) -> usize {
        self.radices.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn radices(&self) -> &[usize] {
        &self.radices
    }

    /// Row-major index (first covariate varies slowest).
    pub fn index(&self, ctx: &Context) -> usize {
        ctx.0.iter().zip(&self.radices).fold(0, |acc, (&v, &r)| acc * r + v as usize)
    }

    pub fn context(&self, mut index: usize) -> Context {
        let mut out = vec![0u32; self.radices.len()];
        for (slot, &r) in out.iter_mut().zip(&self.radices).rev() {
            *slot = (index % r) as u32;
            index /= r;
        }
        Context(out)
    }

    pub fn contexts(&self) -> impl Iterator<Item = Context> + '_ {
        (0..self.len()).map(|i| self.context(i))
    }

    pub fn contains(&self, ctx: &Context) -> bool {
        ctx.0.len() == self.radices.len() && ctx.0.iter().zip(&self.radices).all(|(&v, &r)| (v as usize) < r)
    }
}

/// A non-experimental observation: instrument, covariates, natural (= received)
/// treatment and outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub z: Option<u8>,
    pub context: Context,
    pub reals: Vec<f64>,
    pub a: u8,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    Assigned0,
    Assigned1,
    Preference,
}

impl Arm {
    pub fn as_str(self) -> &'static str {
        match self {
            Arm::Assigned0 => "assigned_0",
            Arm::Assigned1 => "assigned_1",
            Arm::Preference => "preference",
        }
    }

    pub fn parse(s: &str) -> Option<Arm> {
        match s {
            "assigned_0" => Some(Arm::Assigned0),
            "assigned_1" => Some(Arm::Assigned1),
            "preference" => Some(Arm::Preference),
            _ => None,
        }
    }
}

/// A trial record. `a` is the stated natural treatment and is `None` when the
/// design did not record it (a conventional two-arm trial).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceTrialRecord {
    pub z: Option<u8>,
    pub context: Context,
    pub reals: Vec<f64>,
    pub a: Option<u8>,
    pub a_star: u8,
    pub arm: Arm,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rows {
    Observational(Vec<Observation>),
    PreferenceTrial(Vec<PreferenceTrialRecord>),
}

impl Rows {
    pub fn len(&self) -> usize {
        match self {
            Rows::Observational(r) => r.len(),
            Rows::PreferenceTrial(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: Schema,
    rows: Rows,
}

/// Per-column counts produced alongside validation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DatasetSummary {
    pub n_rows: usize,
    pub level_counts: BTreeMap<String, BTreeMap<String, usize>>,
    pub a_counts: [usize; 2],
    pub z_counts: Option<[usize; 2]>,
    pub y_min: f64,
    pub y_max: f64,
    pub arm_counts: Option<BTreeMap<String, usize>>,
}

impl Dataset {
    /// Builds a dataset from already-typed rows, checking every invariant.
    pub fn new(schema: Schema, rows: Rows) -> Result<Self, DataError> {
        if rows.is_empty() {
            return Err(DataError::Empty);
        }
        let mut errors = Vec::new();
        let space = schema.context_space();
        let n_real = schema.n_real();
        let reals: Vec<(f64, f64)> = schema
            .covariates
            .iter()
            .filter_map(|c| match c.kind {
                CovariateKind::Real { min, max } => Some((min, max)),
                _ => None,
            })
            .collect();
        let check_common = |errors: &mut Vec<RowError>, i: usize, z: Option<u8>, ctx: &Context, r: &[f64], y: f64| {
            if schema.instrument != z.is_some() {
                errors.push(RowError {
                    row: Some(i),
                    column: "z".into(),
                    message: "instrument presence disagrees with schema".into(),
                });
            }
            if let Some(z) = z {
                if z > 1 {
                    errors.push(RowError { row: Some(i), column: "z".into(), message: format!("{z} not in {{0,1}}") });
                }
            }
            if !space.contains(ctx) {
                errors.push(RowError { row: Some(i), column: "l".into(), message: format!("context {ctx} outside schema") });
            }
            if r.len() != n_real {
                errors.push(RowError { row: Some(i), column: "l".into(), message: "real covariate arity mismatch".into() });
            } else {
                for (v, (lo, hi)) in r.iter().zip(&reals) {
                    if !v.is_finite() || v < lo || v > hi {
                        errors.push(RowError { row: Some(i), column: "l".into(), message: format!("real covariate {v} out of bounds") });
                    }
                }
            }
            if !y.is_finite() {
                errors.push(RowError { row: Some(i), column: "y".into(), message: "non-finite outcome".into() });
            }
        };
        match (&rows, schema.row_kind) {
            (Rows::Observational(obs), RowKind::Observational) => {
                for (i, o) in obs.iter().enumerate() {
                    check_common(&mut errors, i, o.z, &o.context, &o.reals, o.y);
                    if o.a > 1 {
                        errors.push(RowError { row: Some(i), column: "a".into(), message: format!("{} not in {{0,1}}", o.a) });
                    }
                }
            }
            (Rows::PreferenceTrial(recs), RowKind::PreferenceTrial) => {
                for (i, r) in recs.iter().enumerate() {
                    check_common(&mut errors, i, r.z, &r.context, &r.reals, r.y);
                    if r.a.is_some_and(|a| a > 1) {
                        errors.push(RowError { row: Some(i), column: "a".into(), message: "natural treatment not in {0,1}".into() });
                    }
                    if r.a_star > 1 {
                        errors.push(RowError { row: Some(i), column: "a_star".into(), message: "received treatment not in {0,1}".into() });
                    }
                    if r.arm == Arm::Preference && r.a != Some(r.a_star) {
                        errors.push(RowError { row: Some(i), column: "arm".into(), message: "preference arm requires a_star = a".into() });
                    }
                    let forced = match r.arm {
                        Arm::Assigned0 => Some(0),
                        Arm::Assigned1 => Some(1),
                        Arm::Preference => None,
                    };
                    if forced.is_some_and(|f| f != r.a_star) {
                        errors.push(RowError { row: Some(i), column: "a_star".into(), message: "received treatment disagrees with assigned arm".into() });
                    }
                }
            }
            _ => {
                return Err(DataError::SchemaMismatch("row kind disagrees with schema".into()));
            }
        }
        if errors.is_empty() {
            Ok(Dataset { schema, rows })
        } else {
            Err(DataError::Invalid(errors))
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn rows(&self) -> &Rows {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Observational rows, or `None` for trial data.
    pub fn observations(&self) -> Option<&[Observation]> {
        match &self.rows {
            Rows::Observational(o) => Some(o),
            Rows::PreferenceTrial(_) => None,
        }
    }

    pub fn trial_records(&self) -> Option<&[PreferenceTrialRecord]> {
        match &self.rows {
            Rows::PreferenceTrial(r) => Some(r),
            Rows::Observational(_) => None,
        }
    }

    /// True when every outcome is exactly 0 or 1.
    pub fn binary_outcome(&self) -> bool {
        let bin = |y: f64| y == 0.0 || y == 1.0;
        match &self.rows {
            Rows::Observational(o) => o.iter().all(|r| bin(r.y)),
            Rows::PreferenceTrial(r) => r.iter().all(|r| bin(r.y)),
        }
    }

    /// Subset of observational rows by index (used for splits and resamples).
    /// Trial datasets are returned with the selected records.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let rows = match &self.rows {
            Rows::Observational(o) => Rows::Observational(indices.iter().map(|&i| o[i].clone()).collect()),
            Rows::PreferenceTrial(r) => Rows::PreferenceTrial(indices.iter().map(|&i| r[i].clone()).collect()),
        };
        Dataset { schema: self.schema.clone(), rows }
    }

    pub fn summary(&self) -> DatasetSummary {
        let mut level_counts: BTreeMap<String, BTreeMap<String, usize>> = BTreeMap::new();
        for (name, levels) in self.schema.categorical() {
            level_counts.insert(name.to_string(), levels.iter().map(|l| (l.clone(), 0)).collect());
        }
        let cat: Vec<(&str, &[String])> = self.schema.categorical().collect();
        let mut a_counts = [0usize; 2];
        let mut z_counts = [0usize; 2];
        let mut y_min = f64::INFINITY;
        let mut y_max = f64::NEG_INFINITY;
        let mut arm_counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut visit = |z: Option<u8>, ctx: &Context, a: Option<u8>, y: f64| {
            for ((name, levels), &v) in cat.iter().zip(&ctx.0) {
                *level_counts.get_mut(*name).unwrap().get_mut(&levels[v as usize]).unwrap() += 1;
            }
            if let Some(a) = a {
                a_counts[a as usize] += 1;
            }
            if let Some(z) = z {
                z_counts[z as usize] += 1;
            }
            y_min = y_min.min(y);
            y_max = y_max.max(y);
        };
        match &self.rows {
            Rows::Observational(o) => o.iter().for_each(|r| visit(r.z, &r.context, Some(r.a), r.y)),
            Rows::PreferenceTrial(recs) => {
                for r in recs {
                    visit(r.z, &r.context, r.a, r.y);
                    *arm_counts.entry(r.arm.as_str().to_string()).or_default() += 1;
                }
            }
        }
        DatasetSummary {
            n_rows: self.len(),
            level_counts,
            a_counts,
            z_counts: self.schema.instrument.then_some(z_counts),
            y_min,
            y_max,
            arm_counts: matches!(self.rows, Rows::PreferenceTrial(_)).then_some(arm_counts),
        }
    }

    /// Column order used when writing CSV.
    pub fn csv_headers(&self) -> Vec<String> {
        let mut h = Vec::new();
        if self.schema.instrument {
            h.push("z".to_string());
        }
        h.extend(self.schema.covariates.iter().map(|c| c.name.clone()));
        h.push("a".into());
        if self.schema.row_kind == RowKind::PreferenceTrial {
            h.push("a_star".into());
            h.push("arm".into());
        }
        h.push("y".into());
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), DataError> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(self.csv_headers())?;
        let cov_text = |ctx: &Context, reals: &[f64]| -> Vec<String> {
            let mut cat = ctx.0.iter();
            let mut real = reals.iter();
            self.schema
                .covariates
                .iter()
                .map(|c| match &c.kind {
                    CovariateKind::Categorical { levels } => levels[*cat.next().unwrap() as usize].clone(),
                    CovariateKind::Real { .. } => real.next().unwrap().to_string(),
                })
                .collect()
        };
        match &self.rows {
            Rows::Observational(obs) => {
                for o in obs {
                    let mut rec = Vec::new();
                    if let Some(z) = o.z {
                        rec.push(z.to_string());
                    }
                    rec.extend(cov_text(&o.context, &o.reals));
                    rec.push(o.a.to_string());
                    rec.push(o.y.to_string());
                    wr.write_record(&rec)?;
                }
            }
            Rows::PreferenceTrial(recs) => {
                for r in recs {
                    let mut rec = Vec::new();
                    if let Some(z) = r.z {
                        rec.push(z.to_string());
                    }
                    rec.extend(cov_text(&r.context, &r.reals));
                    rec.push(r.a.map(|a| a.to_string()).unwrap_or_default());
                    rec.push(r.a_star.to_string());
                    rec.push(r.arm.as_str().to_string());
                    rec.push(r.y.to_string());
                    wr.write_record(&rec)?;
                }
            }
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv is utf-8")
    }

    /// SHA-256 of the canonical CSV serialization.
    pub fn fingerprint(&self) -> String {
        hex::encode(Sha256::digest(self.to_csv_string().as_bytes()))
    }
}

/// Unvalidated CSV contents.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub records: Vec<Vec<String>>,
}

impl RawTable {
    pub fn from_reader<R: Read>(r: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
        let headers = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let mut records = Vec::new();
        for rec in rdr.records() {
            records.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(RawTable { headers, records })
    }

    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self, DataError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn parse_str(s: &str) -> Result<Self, DataError> {
        Self::from_reader(s.as_bytes())
    }
}

fn parse_binary(s: &str) -> Option<u8> {
    match s.trim() {
        "0" => Some(0),
        "1" => Some(1),
        _ => None,
    }
}

/// Validates raw rows against a declared schema, collecting every violation
/// with its row index.
pub fn validate_dataset(raw: &RawTable, schema: &Schema) -> Result<Dataset, DataError> {
    let col = |name: &str| raw.headers.iter().position(|h| h == name);
    let mut missing = Vec::new();
    let mut require = |name: &str| {
        let c = col(name);
        if c.is_none() {
            missing.push(RowError { row: None, column: name.to_string(), message: "missing required column".into() });
        }
        c
    };
    let a_col = require("a");
    let y_col = require("y");
    let z_col = if schema.instrument { require("z") } else { None };
    let trial = schema.row_kind == RowKind::PreferenceTrial;
    let (a_star_col, arm_col) = if trial { (require("a_star"), require("arm")) } else { (None, None) };
    let cov_cols: Vec<Option<usize>> = schema.covariates.iter().map(|c| require(&c.name)).collect();
    if !missing.is_empty() {
        return Err(DataError::Invalid(missing));
    }
    if !schema.instrument && col("z").is_some() {
        return Err(DataError::SchemaMismatch("csv has an instrument column the schema does not declare".into()));
    }
    if raw.records.is_empty() {
        return Err(DataError::Empty);
    }
    let (a_col, y_col) = (a_col.unwrap(), y_col.unwrap());
    let mut errors = Vec::new();
    let mut obs = Vec::new();
    let mut recs = Vec::new();
    for (i, rec) in raw.records.iter().enumerate() {
        let mut err = |column: &str, message: String| errors.push(RowError { row: Some(i), column: column.into(), message });
        let field = |c: usize| rec.get(c).map(|s| s.trim()).unwrap_or("");
        let z = match z_col {
            Some(c) => match parse_binary(field(c)) {
                Some(v) => Some(v),
                None => {
                    err("z", format!("`{}` not in {{0,1}}", field(c)));
                    None
                }
            },
            None => None,
        };
        let mut ctx = Vec::new();
        let mut reals = Vec::new();
        for (cov, c) in schema.covariates.iter().zip(&cov_cols) {
            let v = field(c.unwrap());
            match &cov.kind {
                CovariateKind::Categorical { levels } => match levels.iter().position(|l| l == v) {
                    Some(p) => ctx.push(p as u32),
                    None => err(&cov.name, format!("unknown level `{v}`")),
                },
                CovariateKind::Real { min, max } => match v.parse::<f64>() {
                    Ok(x) if x.is_finite() && x >= *min && x <= *max => reals.push(x),
                    _ => err(&cov.name, format!("`{v}` is not a real in [{min}, {max}]")),
                },
            }
        }
        let y = match field(y_col).parse::<f64>() {
            Ok(v) if v.is_finite() => v,
            _ => {
                err("y", format!("`{}` is not a finite number", field(y_col)));
                f64::NAN
            }
        };
        let a_text = field(a_col);
        if trial {
            let a = if a_text.is_empty() {
                None
            } else {
                match parse_binary(a_text) {
                    Some(v) => Some(v),
                    None => {
                        err("a", format!("`{a_text}` not in {{0,1}}"));
                        None
                    }
                }
            };
            let a_star = parse_binary(field(a_star_col.unwrap()));
            if a_star.is_none() {
                err("a_star", format!("`{}` not in {{0,1}}", field(a_star_col.unwrap())));
            }
            let arm = Arm::parse(field(arm_col.unwrap()));
            if arm.is_none() {
                err("arm", format!("unknown arm `{}`", field(arm_col.unwrap())));
            }
            if let (Some(a_star), Some(arm)) = (a_star, arm) {
                recs.push(PreferenceTrialRecord { z, context: Context(ctx), reals, a, a_star, arm, y });
            }
        } else {
            match parse_binary(a_text) {
                Some(a) => obs.push(Observation { z, context: Context(ctx), reals, a, y }),
                None => err("a", format!("`{a_text}` not in {{0,1}}")),
            }
        }
    }
    if !errors.is_empty() {
        return Err(DataError::Invalid(errors));
    }
    let rows = if trial { Rows::PreferenceTrial(recs) } else { Rows::Observational(obs) };
    Dataset::new(schema.clone(), rows)
}

/// Like [`validate_dataset`] but also rejects covariate columns the schema
/// does not declare.
pub fn validate_strict(raw: &RawTable, schema: &Schema) -> Result<Dataset, DataError> {
    let extra: Vec<&str> = raw
        .headers
        .iter()
        .map(String::as_str)
        .filter(|h| !RESERVED_COLUMNS.contains(h) && !schema.covariates.iter().any(|c| c.name == *h))
        .collect();
    if !extra.is_empty() {
        return Err(DataError::SchemaMismatch(format!("columns not in schema: {}", extra.join(", "))));
    }
    validate_dataset(raw, schema)
}

/// Reads a CSV file, inferring a categorical schema.
pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<Dataset, DataError> {
    let raw = RawTable::from_path(path)?;
    let schema = Schema::infer(&raw);
    validate_dataset(&raw, &schema)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn schema() -> Schema {
        Schema::new(vec![Covariate::categorical("l1", &["lo", "hi"])], true, RowKind::Observational)
    }

    #[test]
    fn three_valid_rows() {
        let raw = RawTable::parse_str("z,l1,a,y\n0,lo,1,0.5\n1,hi,0,1\n1,lo,1,-2.25\n").unwrap();
        let ds = validate_dataset(&raw, &schema()).unwrap();
        assert_eq!(ds.len(), 3);
        let s = ds.summary();
        assert_eq!(s.a_counts, [1, 2]);
        assert_eq!(s.z_counts, Some([1, 2]));
        assert_eq!(s.y_min, -2.25);
        assert_eq!(s.level_counts["l1"]["lo"], 2);
    }

    #[test]
    fn treatment_outside_domain_names_row_and_column() {
        let raw = RawTable::parse_str("z,l1,a,y\n0,lo,1,0.5\n1,hi,2,1\n").unwrap();
        let err = validate_dataset(&raw, &schema()).unwrap_err();
        match err {
            DataError::Invalid(errs) => {
                assert_eq!(errs.len(), 1);
                assert_eq!(errs[0].row, Some(1));
                assert_eq!(errs[0].column, "a");
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn reports_every_violation() {
        let raw = RawTable::parse_str("z,l1,a,y\n3,lo,1,nan\n1,mid,0,1\n").unwrap();
        let DataError::Invalid(errs) = validate_dataset(&raw, &schema()).unwrap_err() else { panic!() };
        let cols: Vec<(Option<usize>, &str)> = errs.iter().map(|e| (e.row, e.column.as_str())).collect();
        assert_eq!(cols, vec![(Some(0), "z"), (Some(0), "y"), (Some(1), "l1")]);
    }

    #[test]
    fn missing_column() {
        let raw = RawTable::parse_str("z,l1,y\n0,lo,1\n").unwrap();
        let DataError::Invalid(errs) = validate_dataset(&raw, &schema()).unwrap_err() else { panic!() };
        assert_eq!(errs[0].column, "a");
        assert_eq!(errs[0].row, None);
    }

    #[test]
    fn instrument_may_be_absent() {
        let raw = RawTable::parse_str("l1,a,y\nlo,1,1\n").unwrap();
        let s = Schema::infer(&raw);
        assert!(!s.instrument);
        assert_eq!(validate_dataset(&raw, &s).unwrap().len(), 1);
    }

    #[test]
    fn preference_arm_requires_matching_treatment() {
        let s = Schema::new(vec![], false, RowKind::PreferenceTrial);
        let raw = RawTable::parse_str("a,a_star,arm,y\n1,0,preference,1\n").unwrap();
        assert!(validate_dataset(&raw, &s).is_err());
        let raw = RawTable::parse_str("a,a_star,arm,y\n,1,assigned_1,1\n1,1,preference,0\n").unwrap();
        let ds = validate_dataset(&raw, &s).unwrap();
        assert_eq!(ds.trial_records().unwrap()[0].a, None);
    }

    #[test]
    fn real_covariates_are_bounded() {
        let s = Schema::new(vec![Covariate::real("age", 0.0, 120.0)], false, RowKind::Observational);
        let raw = RawTable::parse_str("age,a,y\n44.5,1,1\n130,0,0\n").unwrap();
        let DataError::Invalid(errs) = validate_dataset(&raw, &s).unwrap_err() else { panic!() };
        assert_eq!(errs[0].row, Some(1));
    }

    #[test]
    fn context_space_round_trips_indices() {
        let space = ContextSpace::new(vec![2, 3, 2]);
        assert_eq!(space.len(), 12);
        for i in 0..12 {
            assert_eq!(space.index(&space.context(i)), i);
        }
        assert_eq!(ContextSpace::new(vec![]).len(), 1);
        assert_eq!(ContextSpace::new(vec![]).context(0), Context::empty());
    }

    #[test]
    fn infers_numeric_level_order() {
        let raw = RawTable::parse_str("sofa,a,y\n10,1,1\n2,0,1\n").unwrap();
        let s = Schema::infer(&raw);
        assert_eq!(s.covariates[0].kind, CovariateKind::Categorical { levels: vec!["2".into(), "10".into()] });
    }
}
