//! Sharp bounds for binary instrument, treatment and outcome without effect
//! homogeneity.
//!
//! The model is the 16-point simplex of response types
//! `(A^{z=0}, A^{z=1}, Y^{a=0}, Y^{a=1})`; observed `P(Y, A | Z)` fixes eight
//! linear functionals of the type distribution. ATE bounds have a closed form;
//! natural-value effects are solved as linear programs. An independent
//! vertex-enumeration route exists for cross-checking.

use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::regime::IntervalBound;

#[derive(Debug, Error)]
pub enum BoundsError {
    #[error("instrument arm z={0} has no observations")]
    DegenerateArm(u8),
    #[error("observed distribution violates the instrumental inequality; no response-type law reproduces it")]
    Infeasible,
    #[error("natural-value stratum A={0} has zero probability")]
    EmptyStratum(u8),
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("counts file: {0}")]
    Format(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Cell counts `n[y][a][z]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TrialCounts {
    pub n: [[[u64; 2]; 2]; 2],
}

#[derive(Debug, Deserialize)]
struct CountRow {
    y: u8,
    a: u8,
    z: u8,
    count: u64,
}

impl TrialCounts {
    pub fn total(&self) -> u64 {
        self.n.iter().flatten().flatten().sum()
    }

    pub fn arm_total(&self, z: u8) -> u64 {
        (0..2).flat_map(|y| (0..2).map(move |a| (y, a))).map(|(y, a)| self.n[y][a][z as usize]).sum()
    }

    pub fn distribution(&self) -> Result<IvDistribution, BoundsError> {
        let mut p = [[[0.0; 2]; 2]; 2];
        for z in 0..2u8 {
            let nz = self.arm_total(z);
            if nz == 0 {
                return Err(BoundsError::DegenerateArm(z));
            }
            for y in 0..2 {
                for a in 0..2 {
                    p[y][a][z as usize] = self.n[y][a][z as usize] as f64 / nz as f64;
                }
            }
        }
        let p_z1 = self.arm_total(1) as f64 / self.total() as f64;
        Ok(IvDistribution { p, p_z1 })
    }

    /// Reads a CSV with columns `y,a,z,count`. Repeated cells are summed.
    pub fn from_reader<R: Read>(r: R) -> Result<Self, BoundsError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let mut out = TrialCounts::default();
        for (i, row) in rdr.deserialize::<CountRow>().enumerate() {
            let row = row?;
            if row.y > 1 || row.a > 1 || row.z > 1 {
                return Err(BoundsError::Format(format!("row {i}: y, a and z must be 0 or 1")));
            }
            out.n[row.y as usize][row.a as usize][row.z as usize] += row.count;
        }
        if out.total() == 0 {
            return Err(BoundsError::Format("no counts".into()));
        }
        Ok(out)
    }

    pub fn from_path<P: AsRef<Path>>(path: P) -> Result<Self, BoundsError> {
        Self::from_reader(std::fs::File::open(path)?)
    }

    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("y,a,z,count\n");
        for z in 0..2 {
            for a in 0..2 {
                for y in 0..2 {
                    s.push_str(&format!("{y},{a},{z},{}\n", self.n[y][a][z]));
                }
            }
        }
        s
    }
}

/// `P(Y=y, A=a | Z=z)` indexed `[y][a][z]`, plus `P(Z=1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IvDistribution {
    pub p: [[[f64; 2]; 2]; 2],
    pub p_z1: f64,
}

impl IvDistribution {
    fn get(&self, y: usize, a: usize, z: usize) -> f64 {
        self.p[y][a][z]
    }

    pub fn p_z(&self, z: u8) -> f64 {
        if z == 1 {
            self.p_z1
        } else {
            1.0 - self.p_z1
        }
    }

    /// `P(A = a | Z = z)`.
    pub fn p_a_given_z(&self, a: u8, z: u8) -> f64 {
        self.p[0][a as usize][z as usize] + self.p[1][a as usize][z as usize]
    }

    /// Pooled `P(A = a)`.
    pub fn p_a(&self, a: u8) -> f64 {
        (0..2u8).map(|z| self.p_z(z) * self.p_a_given_z(a, z)).sum()
    }

    /// The binary instrumental inequality, necessary and sufficient for the
    /// response-type model to reproduce the distribution.
    pub fn satisfies_iv_inequality(&self, tol: f64) -> bool {
        (0..2).all(|a| self.get(0, a, 0) + self.get(1, a, 1) <= 1.0 + tol && self.get(0, a, 1) + self.get(1, a, 0) <= 1.0 + tol)
    }

    /// Distribution induced by a response-type law `q` (see [`ResponseType`]).
    pub fn from_type_law(q: &[f64; 16], p_z1: f64) -> Self {
        let mut p = [[[0.0; 2]; 2]; 2];
        for (t, &w) in q.iter().enumerate() {
            let rt = ResponseType(t);
            for z in 0..2u8 {
                let a = rt.treatment(z);
                let y = rt.outcome(a);
                p[y as usize][a as usize][z as usize] += w;
            }
        }
        IvDistribution { p, p_z1 }
    }
}

/// Index into the 16 response types: bit 0 `A^{z=0}`, bit 1 `A^{z=1}`,
/// bit 2 `Y^{a=0}`, bit 3 `Y^{a=1}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResponseType(pub usize);

impl ResponseType {
    pub fn treatment(self, z: u8) -> u8 {
        ((self.0 >> z) & 1) as u8
    }

    pub fn outcome(self, a: u8) -> u8 {
        ((self.0 >> (2 + a)) & 1) as u8
    }

    pub fn effect(self) -> f64 {
        f64::from(self.outcome(1)) - f64::from(self.outcome(0))
    }
}

/// Bound targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimand {
    Ate,
    /// `E(Y^1 - Y^0 | A = a')` for natural value `a'`.
    Att(u8),
}

impl std::str::FromStr for Estimand {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ate" => Ok(Estimand::Ate),
            "att0" => Ok(Estimand::Att(0)),
            "att1" => Ok(Estimand::Att(1)),
            other => Err(format!("unknown estimand `{other}` (expected ate, att0 or att1)")),
        }
    }
}

/// How the natural value of treatment is read off a two-arm encouragement trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NaturalValueConvention {
    /// `A` is the recorded treatment in whichever arm a unit was randomized to,
    /// weighted by the arm shares.
    #[default]
    Pooled,
    /// `A` is the choice under encouragement (`z = 1`). Under two-sided
    /// noncompliance the `z = 0` reading is also solved and the envelope of
    /// the two intervals is returned.
    EncouragedArm,
}

const FEAS_TOL: f64 = 1e-9;

/// Closed-form sharp ATE bounds.
pub fn balke_pearl_ate_bounds(counts: &TrialCounts) -> Result<IntervalBound, BoundsError> {
    ate_bounds_closed_form(&counts.distribution()?)
}

pub fn ate_bounds_closed_form(d: &IvDistribution) -> Result<IntervalBound, BoundsError> {
    if !d.satisfies_iv_inequality(FEAS_TOL) {
        return Err(BoundsError::Infeasible);
    }
    // p(y, a, z) with y, a, z in {0, 1}
    let p = |y: usize, a: usize, z: usize| d.get(y, a, z);
    let (p00_0, p01_0, p10_0, p11_0) = (p(0, 0, 0), p(0, 1, 0), p(1, 0, 0), p(1, 1, 0));
    let (p00_1, p01_1, p10_1, p11_1) = (p(0, 0, 1), p(0, 1, 1), p(1, 0, 1), p(1, 1, 1));
    let lower = [
        p11_1 + p00_0 - 1.0,
        p11_0 + p00_1 - 1.0,
        p11_0 - p11_1 - p10_1 - p01_0 - p10_0,
        p11_1 - p11_0 - p10_0 - p01_1 - p10_1,
        -p01_1 - p10_1,
        -p01_0 - p10_0,
        p00_1 - p01_1 - p10_1 - p01_0 - p00_0,
        p00_0 - p01_0 - p10_0 - p01_1 - p00_1,
    ];
    let upper = [
        1.0 - p01_1 - p10_0,
        1.0 - p01_0 - p10_1,
        -p01_0 + p01_1 + p00_1 + p11_0 + p00_0,
        -p01_1 + p11_1 + p00_1 + p01_0 + p00_0,
        p11_1 + p00_1,
        p11_0 + p00_0,
        -p10_1 + p11_1 + p00_1 + p11_0 + p10_0,
        -p10_0 + p11_0 + p00_0 + p11_1 + p10_1,
    ];
    let lo = lower.into_iter().fold(f64::NEG_INFINITY, f64::max);
    let hi = upper.into_iter().fold(f64::INFINITY, f64::min);
    Ok(IntervalBound::new(lo, hi))
}

/// Sharp bounds on `E(Y^1 - Y^0 | A = a')` by linear programming.
pub fn natural_att_bounds(counts: &TrialCounts, intent: u8, convention: NaturalValueConvention) -> Result<IntervalBound, BoundsError> {
    natural_att_bounds_from(&counts.distribution()?, intent, convention)
}

pub fn natural_att_bounds_from(d: &IvDistribution, intent: u8, convention: NaturalValueConvention) -> Result<IntervalBound, BoundsError> {
    let solve = |obj: [f64; 16]| -> Result<IntervalBound, BoundsError> {
        let (a, b) = constraint_system(d);
        let lo = simplex(&a, &b, &obj.map(|c| -c))?;
        let hi = simplex(&a, &b, &obj)?;
        Ok(IntervalBound::new(-lo, hi))
    };
    match convention {
        NaturalValueConvention::Pooled => solve(att_objective(d, intent, Arms::Pooled)?),
        NaturalValueConvention::EncouragedArm => {
            let enc = solve(att_objective(d, intent, Arms::Single(1))?)?;
            let two_sided = d.p_a_given_z(1, 0) > 0.0;
            if !two_sided {
                return Ok(enc);
            }
            match att_objective(d, intent, Arms::Single(0)) {
                Ok(obj) => {
                    let other = solve(obj)?;
                    Ok(IntervalBound::new(enc.lo.min(other.lo), enc.hi.max(other.hi)))
                }
                Err(BoundsError::EmptyStratum(_)) => Ok(enc),
                Err(e) => Err(e),
            }
        }
    }
}

#[derive(Clone, Copy)]
enum Arms {
    Pooled,
    Single(u8),
}

fn att_objective(d: &IvDistribution, intent: u8, arms: Arms) -> Result<[f64; 16], BoundsError> {
    let weights: [f64; 2] = match arms {
        Arms::Pooled => [d.p_z(0), d.p_z(1)],
        Arms::Single(z) => {
            let mut w = [0.0; 2];
            w[z as usize] = 1.0;
            w
        }
    };
    let mass: f64 = (0..2u8).map(|z| weights[z as usize] * d.p_a_given_z(intent, z)).sum();
    if mass <= 0.0 {
        return Err(BoundsError::EmptyStratum(intent));
    }
    let mut c = [0.0; 16];
    for (t, ct) in c.iter_mut().enumerate() {
        let rt = ResponseType(t);
        let w: f64 = (0..2u8).filter(|&z| rt.treatment(z) == intent).map(|z| weights[z as usize]).sum();
        *ct = w * rt.effect() / mass;
    }
    Ok(c)
}

fn ate_objective() -> [f64; 16] {
    std::array::from_fn(|t| ResponseType(t).effect())
}

/// Rows `(y, a, z)` of `sum_t q_t I[A^z(t) = a, Y^a(t) = y] = p(y, a | z)`.
fn constraint_system(d: &IvDistribution) -> (Vec<[f64; 16]>, Vec<f64>) {
    let mut rows = Vec::with_capacity(8);
    let mut rhs = Vec::with_capacity(8);
    for z in 0..2u8 {
        for a in 0..2u8 {
            for y in 0..2u8 {
                let row = std::array::from_fn(|t| {
                    let rt = ResponseType(t);
                    f64::from(u8::from(rt.treatment(z) == a && rt.outcome(a) == y))
                });
                rows.push(row);
                rhs.push(d.get(y as usize, a as usize, z as usize));
            }
        }
    }
    (rows, rhs)
}

/// Same estimands solved by exhaustive enumeration of basic feasible
/// solutions. Slow and only meant as an independent check.
pub fn lp_oracle_bounds(counts: &TrialCounts, estimand: Estimand) -> Result<IntervalBound, BoundsError> {
    lp_oracle_bounds_from(&counts.distribution()?, estimand)
}

pub fn lp_oracle_bounds_from(d: &IvDistribution, estimand: Estimand) -> Result<IntervalBound, BoundsError> {
    let obj = match estimand {
        Estimand::Ate => ate_objective(),
        Estimand::Att(i) => att_objective(d, i, Arms::Pooled)?,
    };
    let (rows, rhs) = constraint_system(d);
    let full = DMatrix::from_fn(rows.len(), 16, |i, j| rows[i][j]);
    // keep a maximal independent row subset
    let mut keep: Vec<usize> = Vec::new();
    for i in 0..rows.len() {
        let mut trial = keep.clone();
        trial.push(i);
        let sub = full.select_rows(trial.iter());
        if sub.rank(1e-9) == trial.len() {
            keep = trial;
        }
    }
    let a = full.select_rows(keep.iter());
    let b = DVector::from_iterator(keep.len(), keep.iter().map(|&i| rhs[i]));
    let r = keep.len();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut cols: Vec<usize> = (0..r).collect();
    loop {
        let basis = a.select_columns(cols.iter());
        if let Some(lu) = basis.clone().full_piv_lu().is_invertible().then(|| basis.full_piv_lu()) {
            if let Some(x) = lu.solve(&b) {
                if x.iter().all(|&v| v >= -1e-10) {
                    let val: f64 = cols.iter().zip(x.iter()).map(|(&j, &v)| obj[j] * v.max(0.0)).sum();
                    lo = lo.min(val);
                    hi = hi.max(val);
                }
            }
        }
        if !next_combination(&mut cols, 16) {
            break;
        }
    }
    if !lo.is_finite() {
        return Err(BoundsError::Infeasible);
    }
    Ok(IntervalBound::new(lo, hi))
}

fn next_combination(c: &mut [usize], n: usize) -> bool {
    let k = c.len();
    for i in (0..k).rev() {
        if c[i] < n - k + i {
            c[i] += 1;
            for j in i + 1..k {
                c[j] = c[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// Maximizes `c·x` subject to `A x = b`, `x >= 0`. Two-phase dense tableau
/// simplex with Bland's rule.
pub fn simplex<const N: usize>(a: &[[f64; N]], b: &[f64], c: &[f64; N]) -> Result<f64, BoundsError> {
    const EPS: f64 = 1e-12;
    let m = a.len();
    let width = N + m + 1;
    let mut t: Vec<Vec<f64>> = Vec::with_capacity(m);
    for i in 0..m {
        let sign = if b[i] < 0.0 { -1.0 } else { 1.0 };
        let mut row = vec![0.0; width];
        for j in 0..N {
            row[j] = sign * a[i][j];
        }
        row[N + i] = 1.0;
        row[width - 1] = sign * b[i];
        t.push(row);
    }
    let mut basis: Vec<usize> = (N..N + m).collect();

    let pivot = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, r: usize, col: usize| {
        let pv = t[r][col];
        for v in t[r].iter_mut() {
            *v /= pv;
        }
        let prow = t[r].clone();
        for (i, row) in t.iter_mut().enumerate() {
            if i != r {
                let f = row[col];
                if f != 0.0 {
                    for (v, p) in row.iter_mut().zip(&prow) {
                        *v -= f * p;
                    }
                }
            }
        }
        basis[r] = col;
    };

    let optimize = |t: &mut Vec<Vec<f64>>, basis: &mut Vec<usize>, cost: &[f64], allowed: usize| -> Result<(), BoundsError> {
        loop {
            let mut enter = None;
            for j in 0..allowed {
                if basis.contains(&j) {
                    continue;
                }
                let reduced = cost[j] - (0..t.len()).map(|i| cost[basis[i]] * t[i][j]).sum::<f64>();
                if reduced > EPS {
                    enter = Some(j);
                    break;
                }
            }
            let Some(col) = enter else { return Ok(()) };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..t.len() {
                if t[i][col] > EPS {
                    let ratio = t[i][width - 1] / t[i][col];
                    let better = match leave {
                        None => true,
                        Some((r, best)) => ratio < best - EPS || (ratio <= best + EPS && basis[i] < basis[r]),
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((r, _)) = leave else { return Err(BoundsError::Unbounded) };
            pivot(t, basis, r, col);
        }
    };

    // phase 1: minimize the artificial total
    let mut cost1 = vec![0.0; N + m];
    for v in cost1.iter_mut().skip(N) {
        *v = -1.0;
    }
    optimize(&mut t, &mut basis, &cost1, N + m)?;
    let infeas: f64 = (0..m).filter(|&i| basis[i] >= N).map(|i| t[i][width - 1]).sum();
    if infeas > FEAS_TOL {
        return Err(BoundsError::Infeasible);
    }
    // drive artificials out of the basis; drop redundant rows
    let mut i = 0;
    while i < t.len() {
        if basis[i] >= N {
            match (0..N).find(|&j| t[i][j].abs() > 1e-9) {
                Some(j) => {
                    pivot(&mut t, &mut basis, i, j);
                    i += 1;
                }
                None => {
                    t.remove(i);
                    basis.remove(i);
                }
            }
        } else {
            i += 1;
        }
    }
    let mut cost2 = vec![0.0; N + m];
    cost2[..N].copy_from_slice(c);
    optimize(&mut t, &mut basis, &cost2, N)?;
    Ok((0..t.len()).map(|i| cost2[basis[i]] * t[i][width - 1]).sum())
}

/// Counts of the vitamin A supplementation trial (villages randomized to
/// supplementation, `z = 1`; outcome survival).
pub fn vitamin_a_counts() -> TrialCounts {
    TrialCounts::from_reader(include_str!("../data/vitamin_a_counts.csv").as_bytes()).expect("bundled counts parse")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_type_law(rng: &mut ChaCha8Rng) -> [f64; 16] {
        let mut q: [f64; 16] = std::array::from_fn(|_| {
            let x: f64 = rng.random();
            if rng.random::<f64>() < 0.3 {
                0.0
            } else {
                x
            }
        });
        let s: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= s);
        q
    }

    #[test]
    fn vitamin_a_ate() {
        let b = balke_pearl_ate_bounds(&vitamin_a_counts()).unwrap();
        assert!((b.lo + 0.1946).abs() < 5e-4, "{b}");
        assert!((b.hi - 0.0054).abs() < 5e-4, "{b}");
    }

    #[test]
    fn vitamin_a_natural_effects() {
        let c = vitamin_a_counts();
        let t1 = natural_att_bounds(&c, 1, NaturalValueConvention::Pooled).unwrap();
        assert!(t1.width() < 1e-9);
        assert!((t1.lo - 0.0032).abs() < 5e-4, "{t1}");
        let t0 = natural_att_bounds(&c, 0, NaturalValueConvention::Pooled).unwrap();
        assert!((t0.lo + 0.33).abs() < 5e-3 && (t0.hi - 0.0069).abs() < 5e-3, "{t0}");
        // one-sided compliance: the encouraged-arm reading also point-identifies a'=1
        let e1 = natural_att_bounds(&c, 1, NaturalValueConvention::EncouragedArm).unwrap();
        assert!((e1.lo - t1.lo).abs() < 1e-9 && e1.width() < 1e-9);
    }

    #[test]
    fn perfect_compliance_is_a_point() {
        let mut c = TrialCounts::default();
        c.n[1][1][1] = 70;
        c.n[0][1][1] = 30;
        c.n[1][0][0] = 40;
        c.n[0][0][0] = 60;
        let b = balke_pearl_ate_bounds(&c).unwrap();
        assert!(b.width() < 1e-12 && (b.lo - 0.3).abs() < 1e-12);
    }

    #[test]
    fn closed_form_matches_simplex_and_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..40 {
            let q = random_type_law(&mut rng);
            let d = IvDistribution::from_type_law(&q, rng.random_range(0.2..0.8));
            let cf = ate_bounds_closed_form(&d).unwrap();
            let (a, b) = constraint_system(&d);
            let hi = simplex(&a, &b, &ate_objective()).unwrap();
            let lo = -simplex(&a, &b, &ate_objective().map(|x| -x)).unwrap();
            assert!((cf.lo - lo).abs() < 1e-9 && (cf.hi - hi).abs() < 1e-9, "{cf} vs [{lo}, {hi}]");
            let orc = lp_oracle_bounds_from(&d, Estimand::Ate).unwrap();
            assert!((cf.lo - orc.lo).abs() < 1e-9 && (cf.hi - orc.hi).abs() < 1e-9);
            for i in 0..2 {
                let s = natural_att_bounds_from(&d, i, NaturalValueConvention::Pooled).unwrap();
                let o = lp_oracle_bounds_from(&d, Estimand::Att(i)).unwrap();
                assert!((s.lo - o.lo).abs() < 1e-9 && (s.hi - o.hi).abs() < 1e-9);
                // the true law lies in the feasible set
                let truth: f64 = att_objective(&d, i, Arms::Pooled).unwrap().iter().zip(&q).map(|(c, w)| c * w).sum();
                assert!(s.contains(truth, 1e-9));
            }
        }
    }

    #[test]
    fn detects_infeasible_table() {
        let mut c = TrialCounts::default();
        // y=0,a=0 in z=0 and y=1,a=0 in z=1 both certain
        c.n[0][0][0] = 10;
        c.n[1][0][1] = 10;
        assert!(matches!(balke_pearl_ate_bounds(&c), Err(BoundsError::Infeasible)));
        assert!(matches!(lp_oracle_bounds(&c, Estimand::Ate), Err(BoundsError::Infeasible)));
        assert!(matches!(natural_att_bounds(&c, 0, NaturalValueConvention::Pooled), Err(BoundsError::Infeasible)));
    }

    #[test]
    fn degenerate_point_law() {
        let mut q = [0.0; 16];
        q[0b1010] = 1.0; // complier with Y^1 = 1, Y^0 = 0
        let d = IvDistribution::from_type_law(&q, 0.5);
        let b = lp_oracle_bounds_from(&d, Estimand::Ate).unwrap();
        assert!(b.width() < 1e-9 && (b.lo - 1.0).abs() < 1e-9);
    }

    #[test]
    fn counts_csv_round_trip() {
        let c = vitamin_a_counts();
        assert_eq!(TrialCounts::from_reader(c.to_csv_string().as_bytes()).unwrap(), c);
        assert!(TrialCounts::from_reader("y,a,z,count\n2,0,0,5\n".as_bytes()).is_err());
    }

    #[test]
    fn empty_arm_is_rejected() {
        let mut c = TrialCounts::default();
        c.n[1][1][1] = 5;
        assert!(matches!(c.distribution(), Err(BoundsError::DegenerateArm(0))));
    }
}
