//! Structural laws over `(U, L, Z, A, Y^0, Y^1)`, exact enumeration oracles
//! and seeded sampling.
//!
//! Oracles never go through identification: every quantity is a sum over the
//! latent `U`, so they serve as ground truth for the rest of the crate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{
    Arm, Context, ContextSpace, Covariate, Dataset, Observation, PreferenceTrialRecord, RowKind, Rows, Schema,
};
use crate::identify::ObservedLaw;
use crate::regime::{Regime, RegimeError, RegimeKind, TIE_TOL};

#[derive(Debug, Error)]
pub enum SimulateError {
    #[error("unknown example `{0}` (expected ex1, ex2, ex3 or icu)")]
    UnknownExample(String),
    #[error("parameter c = {0} must lie in (0, 0.4)")]
    ParameterOutOfRange(f64),
    #[error("conditioning event has zero probability")]
    ZeroProbability,
    #[error("invalid law: {0}")]
    InvalidLaw(String),
    #[error(transparent)]
    Regime(#[from] RegimeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OutcomeNoise {
    Degenerate,
    Gaussian { sigma: f64 },
    Bernoulli,
}

/// A discrete generative model. `U` is independent of `L`, `Z` depends on `L`
/// only, and the treatment model is the only place `Z` and `U` meet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralLaw {
    pub covariate_names: Vec<String>,
    pub factor_levels: Vec<usize>,
    pub p_u: Vec<f64>,
    pub p_l: Vec<f64>,
    /// `P(Z=1 | l)`; `None` for a law without an instrument.
    pub p_z1_given_l: Option<Vec<f64>>,
    /// `P(A=1 | z, l, u)` indexed `[l][u][z]`. Without an instrument both
    /// entries are equal.
    pub p_a1_given_zlu: Vec<Vec<[f64; 2]>>,
    /// `E(Y^a | l, u)` indexed `[l][u][a]`.
    pub mean_y_given_alu: Vec<Vec<[f64; 2]>>,
    pub outcome_noise: OutcomeNoise,
}

const PMF_TOL: f64 = 1e-12;

impl StructuralLaw {
    pub fn space(&self) -> ContextSpace {
        ContextSpace::new(self.factor_levels.clone())
    }

    pub fn has_instrument(&self) -> bool {
        self.p_z1_given_l.is_some()
    }

    pub fn n_contexts(&self) -> usize {
        self.p_l.len()
    }

    pub fn validate(&self) -> Result<(), SimulateError> {
        let bad = |m: &str| Err(SimulateError::InvalidLaw(m.to_string()));
        let nl = self.space().len();
        if self.p_l.len() != nl || self.covariate_names.len() != self.factor_levels.len() {
            return bad("context arity mismatch");
        }
        for (name, p) in [("p_u", &self.p_u), ("p_l", &self.p_l)] {
            if p.iter().any(|&x| !(0.0..=1.0).contains(&x)) || (p.iter().sum::<f64>() - 1.0).abs() > PMF_TOL {
                return Err(SimulateError::InvalidLaw(format!("{name} is not a pmf")));
            }
        }
        if let Some(pz) = &self.p_z1_given_l {
            if pz.len() != nl || pz.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                return bad("p_z1_given_l malformed");
            }
        }
        let nu = self.p_u.len();
        if self.p_a1_given_zlu.len() != nl || self.mean_y_given_alu.len() != nl {
            return bad("per-context tables malformed");
        }
        for l in 0..nl {
            if self.p_a1_given_zlu[l].len() != nu || self.mean_y_given_alu[l].len() != nu {
                return bad("per-latent tables malformed");
            }
            for u in 0..nu {
                let pa = self.p_a1_given_zlu[l][u];
                if pa.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                    return bad("treatment probability outside [0,1]");
                }
                if !self.has_instrument() && pa[0] != pa[1] {
                    return bad("treatment model depends on an absent instrument");
                }
                let m = self.mean_y_given_alu[l][u];
                if m.iter().any(|x| !x.is_finite()) {
                    return bad("non-finite outcome mean");
                }
                if self.outcome_noise == OutcomeNoise::Bernoulli && m.iter().any(|&x| !(0.0..=1.0).contains(&x)) {
                    return bad("bernoulli outcome mean outside [0,1]");
                }
            }
        }
        Ok(())
    }

    fn p_z(&self, l: usize, z: u8) -> f64 {
        match &self.p_z1_given_l {
            Some(p) => {
                if z == 1 {
                    p[l]
                } else {
                    1.0 - p[l]
                }
            }
            None => {
                if z == 0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn p_a(&self, l: usize, u: usize, z: u8, a: u8) -> f64 {
        let p1 = self.p_a1_given_zlu[l][u][z as usize];
        if a == 1 {
            p1
        } else {
            1.0 - p1
        }
    }

    /// Visits every `(l, u, z, a)` cell with positive joint probability.
    fn cells(&self, mut f: impl FnMut(usize, usize, u8, u8, f64)) {
        for l in 0..self.n_contexts() {
            for (u, &pu) in self.p_u.iter().enumerate() {
                for z in 0..2u8 {
                    let pz = self.p_z(l, z);
                    for a in 0..2u8 {
                        let p = self.p_l[l] * pu * pz * self.p_a(l, u, z, a);
                        if p > 0.0 {
                            f(l, u, z, a, p);
                        }
                    }
                }
            }
        }
    }

    /// Probability of the event `condition`.
    pub fn probability(&self, condition: Condition) -> f64 {
        let mut total = 0.0;
        self.cells(|l, _, z, a, p| {
            if condition.matches(l, z, a) {
                total += p;
            }
        });
        total
    }

    /// The law of the observables `(L, Z, A, Y)`.
    pub fn observed_law(&self) -> ObservedLaw {
        let nl = self.n_contexts();
        let mut p_a1 = vec![[0.0; 2]; nl];
        let mut mean_y = vec![[[0.0; 2]; 2]; nl];
        for l in 0..nl {
            for z in 0..2u8 {
                let mut pa = [0.0; 2];
                let mut sy = [0.0; 2];
                for (u, &pu) in self.p_u.iter().enumerate() {
                    for a in 0..2u8 {
                        let w = pu * self.p_a(l, u, z, a);
                        pa[a as usize] += w;
                        sy[a as usize] += w * self.mean_y_given_alu[l][u][a as usize];
                    }
                }
                p_a1[l][z as usize] = pa[1];
                for a in 0..2 {
                    mean_y[l][z as usize][a] = if pa[a] > 0.0 { sy[a] / pa[a] } else { 0.0 };
                }
            }
        }
        ObservedLaw {
            factor_levels: self.factor_levels.clone(),
            p_l: self.p_l.clone(),
            p_z1_given_l: self.p_z1_given_l.clone(),
            p_a1_given_zl: p_a1,
            mean_y_given_azl: mean_y,
        }
    }

    pub fn schema(&self) -> Schema {
        let covariates = self
            .covariate_names
            .iter()
            .zip(&self.factor_levels)
            .map(|(name, &k)| {
                let levels: Vec<String> = (0..k).map(|v| v.to_string()).collect();
                Covariate { name: name.clone(), kind: crate::data::CovariateKind::Categorical { levels } }
            })
            .collect();
        Schema::new(covariates, self.has_instrument(), RowKind::Observational)
    }
}

/// Conditioning event: any subset of `{A = a', L = l, Z = z}`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Condition {
    pub natural: Option<u8>,
    pub context: Option<usize>,
    pub instrument: Option<u8>,
}

impl Condition {
    pub fn all() -> Self {
        Condition::default()
    }

    pub fn natural(mut self, a: u8) -> Self {
        self.natural = Some(a);
        self
    }

    pub fn context(mut self, l: usize) -> Self {
        self.context = Some(l);
        self
    }

    pub fn instrument(mut self, z: u8) -> Self {
        self.instrument = Some(z);
        self
    }

    fn matches(&self, l: usize, z: u8, a: u8) -> bool {
        self.natural.is_none_or(|x| x == a) && self.context.is_none_or(|x| x == l) && self.instrument.is_none_or(|x| x == z)
    }
}

/// `E(Y^a | condition)` by exact summation over the latent variable.
pub fn oracle_conditional_mean(law: &StructuralLaw, a: u8, condition: Condition) -> Result<f64, SimulateError> {
    let mut mass = 0.0;
    let mut acc = 0.0;
    law.cells(|l, u, z, nat, p| {
        if condition.matches(l, z, nat) {
            mass += p;
            acc += p * law.mean_y_given_alu[l][u][a as usize];
        }
    });
    if mass <= 0.0 {
        return Err(SimulateError::ZeroProbability);
    }
    Ok(acc / mass)
}

/// `E(Y^g)`, or `E(Y^g | L = l)` when `context` is given.
pub fn oracle_value(law: &StructuralLaw, regime: &Regime, context: Option<usize>) -> Result<f64, SimulateError> {
    if regime.space() != &law.space() {
        return Err(SimulateError::InvalidLaw("regime context space differs from the law's".into()));
    }
    let mut mass = 0.0;
    let mut acc = 0.0;
    let mut err = None;
    law.cells(|l, u, z, a, p| {
        if context.is_some_and(|c| c != l) {
            return;
        }
        let zi = law.has_instrument().then_some(z);
        match regime.assign(a, l, zi) {
            Ok(g) => {
                mass += p;
                acc += p * law.mean_y_given_alu[l][u][g as usize];
            }
            Err(e) => err = Some(e),
        }
    });
    if let Some(e) = err {
        return Err(e.into());
    }
    if mass <= 0.0 {
        return Err(SimulateError::ZeroProbability);
    }
    Ok(acc / mass)
}

/// Oracle argmax regimes. Superoptimal ties keep the natural choice, optimal
/// ties go to treatment 1.
pub fn true_regime(law: &StructuralLaw, kind: RegimeKind) -> Result<Regime, SimulateError> {
    let space = law.space();
    let mut err = None;
    let mut mean = |a: u8, c: Condition| match oracle_conditional_mean(law, a, c) {
        Ok(v) => v,
        Err(e) => {
            err.get_or_insert(e);
            0.0
        }
    };
    let regime = match kind {
        RegimeKind::OptimalL => Regime::from_context_fn(kind, space, |l| {
            let c = Condition::all().context(l);
            u8::from(mean(1, c) >= mean(0, c) - TIE_TOL)
        }),
        RegimeKind::SuperoptimalLA => Regime::from_fn(kind, space, true, false, |l, i, _| {
            let c = Condition::all().context(l).natural(i);
            keep_or_flip(i, mean(i, c), mean(1 - i, c))
        }),
        RegimeKind::SuperoptimalLAZ => {
            if !law.has_instrument() {
                return Err(SimulateError::InvalidLaw("law has no instrument".into()));
            }
            Regime::from_fn(kind, space, true, true, |l, i, z| {
                let c = Condition::all().context(l).natural(i).instrument(z);
                keep_or_flip(i, mean(i, c), mean(1 - i, c))
            })
        }
        RegimeKind::Observed => Regime::observed(space),
        RegimeKind::ExplicitTable => {
            return Err(SimulateError::InvalidLaw("explicit tables have no oracle".into()));
        }
    };
    match err {
        Some(e) => Err(e),
        None => Ok(regime),
    }
}

fn keep_or_flip(intent: u8, keep: f64, flip: f64) -> u8 {
    if keep >= flip - TIE_TOL {
        intent
    } else {
        1 - intent
    }
}

/// Parameters of the worked examples.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExampleParams {
    /// Compliance scale of ex3.
    pub c: f64,
    /// Carry the inert Bernoulli(0.5) covariate `w` of ex1/ex2.
    pub include_w: bool,
}

impl Default for ExampleParams {
    fn default() -> Self {
        ExampleParams { c: 0.2, include_w: false }
    }
}

/// The three worked examples: ex1 and ex2 have Gaussian outcomes with means
/// `2U-1` (treated) and `1-2U` (untreated); ex3 has a binary outcome.
/// `icu` is a synthetic intensive-care law with three binary covariates.
pub fn build_example_law(id: &str, params: ExampleParams) -> Result<StructuralLaw, SimulateError> {
    if id == "icu" {
        let law = icu_law();
        law.validate()?;
        return Ok(law);
    }
    let (names, levels, p_l) = if params.include_w && id != "ex3" {
        (vec!["w".to_string()], vec![2], vec![0.5, 0.5])
    } else {
        (Vec::new(), Vec::new(), vec![1.0])
    };
    let nl = p_l.len();
    let per_u = |f: &dyn Fn(usize) -> [f64; 2]| -> Vec<Vec<[f64; 2]>> { vec![(0..2).map(f).collect(); nl] };
    let law = match id {
        "ex1" | "ex2" => {
            let flip = id == "ex2";
            let p_a = per_u(&|u| {
                let u = u as f64;
                let (p0, p1) = (0.3 * u + 0.4, 0.3 * u + 0.6);
                if flip {
                    [1.0 - p0, 1.0 - p1]
                } else {
                    [p0, p1]
                }
            });
            let mean_y = per_u(&|u| {
                let u = u as f64;
                [1.0 - 2.0 * u, 2.0 * u - 1.0]
            });
            StructuralLaw {
                covariate_names: names,
                factor_levels: levels,
                p_u: vec![0.5, 0.5],
                p_l,
                p_z1_given_l: Some(vec![0.5; nl]),
                p_a1_given_zlu: p_a,
                mean_y_given_alu: mean_y,
                outcome_noise: OutcomeNoise::Gaussian { sigma: 1.0 },
            }
        }
        "ex3" => {
            let c = params.c;
            if !(c > 0.0 && c < 0.4) {
                return Err(SimulateError::ParameterOutOfRange(c));
            }
            let p_a = per_u(&|u| {
                let u = u as f64;
                [0.5 * c + c * u, 0.5 * c + c + c * u]
            });
            let mean_y = vec![vec![[0.1, 0.9], [0.7, 0.1]]; nl];
            StructuralLaw {
                covariate_names: names,
                factor_levels: levels,
                p_u: vec![0.5, 0.5],
                p_l,
                p_z1_given_l: Some(vec![0.5; nl]),
                p_a1_given_zlu: p_a,
                mean_y_given_alu: mean_y,
                outcome_noise: OutcomeNoise::Bernoulli,
            }
        }
        other => return Err(SimulateError::UnknownExample(other.to_string())),
    };
    law.validate()?;
    Ok(law)
}

/// Survival after an ICU intervention. Covariates `age_hi`, `sepsis`,
/// `ventilated`; latent frailty `u` raises both the clinician's propensity to
/// treat and the benefit of treatment. Sepsis makes treatment worthwhile for all. The instrument shifts the treatment
/// probability by 0.25 in every stratum.
fn icu_law() -> StructuralLaw {
    let space = ContextSpace::new(vec![2, 2, 2]);
    let mut p_a = Vec::new();
    let mut mean_y = Vec::new();
    for l in 0..space.len() {
        let c = space.context(l).0;
        let (age, sepsis, vent) = (f64::from(c[0]), f64::from(c[1]), f64::from(c[2]));
        let base = 0.76 - 0.04 * age - 0.05 * sepsis - 0.03 * vent;
        p_a.push((0..2).map(|u| {
            let p = 0.1 + 0.5 * u as f64 + 0.05 * vent;
            [p, p + 0.25]
        }).collect());
        mean_y.push((0..2).map(|u| {
            let y0 = base - 0.06 * u as f64;
            let gain = if u == 1 { 0.12 } else { -0.12 } + 0.2 * sepsis;
            [y0, y0 + gain]
        }).collect());
    }
    StructuralLaw {
        covariate_names: vec!["age_hi".into(), "sepsis".into(), "ventilated".into()],
        factor_levels: vec![2, 2, 2],
        p_u: vec![0.5, 0.5],
        p_l: vec![0.125; 8],
        p_z1_given_l: Some(vec![0.5; 8]),
        p_a1_given_zlu: p_a,
        mean_y_given_alu: mean_y,
        outcome_noise: OutcomeNoise::Bernoulli,
    }
}

/// Options for [`random_law`].
#[derive(Debug, Clone, PartialEq)]
pub struct RandomLawSpec {
    pub factor_levels: Vec<usize>,
    pub n_latent: usize,
    pub instrument: bool,
    /// Treatment model constant in `u`, so `Y^a ⫫ A | L`.
    pub exchangeable: bool,
    /// Instrument effect on the treatment constant in `u` and bounded away
    /// from zero (the homogeneity and relevance conditions of IV identification).
    pub iv_compliant: bool,
    pub binary_outcome: bool,
}

impl Default for RandomLawSpec {
    fn default() -> Self {
        RandomLawSpec {
            factor_levels: vec![2],
            n_latent: 2,
            instrument: true,
            exchangeable: false,
            iv_compliant: true,
            binary_outcome: true,
        }
    }
}

/// Lower bound on every pmf entry and on `P(A=a | z,l,u)`.
pub const PMF_FLOOR: f64 = 0.05;

fn random_pmf<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>() + 1e-9).collect();
    let s: f64 = raw.iter().sum();
    let slack = 1.0 - k as f64 * PMF_FLOOR;
    let mut p: Vec<f64> = raw.iter().map(|x| PMF_FLOOR + slack * x / s).collect();
    let err = 1.0 - p.iter().sum::<f64>();
    p[0] += err;
    p
}

/// Draws a random law with pmfs floored at [`PMF_FLOOR`].
pub fn random_law<R: Rng>(rng: &mut R, spec: &RandomLawSpec) -> StructuralLaw {
    let space = ContextSpace::new(spec.factor_levels.clone());
    let nl = space.len();
    let nu = spec.n_latent.max(1);
    let p_u = random_pmf(rng, nu);
    let p_l = random_pmf(rng, nl);
    let p_z = spec.instrument.then(|| (0..nl).map(|_| rng.random_range(0.2..0.8)).collect::<Vec<f64>>());
    let (lo, hi) = (PMF_FLOOR, 1.0 - PMF_FLOOR);
    let mut p_a = Vec::with_capacity(nl);
    for _ in 0..nl {
        let d: f64 = if spec.instrument {
            let m = rng.random_range(0.1..0.4);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        } else {
            0.0
        };
        let base_lo = lo - d.min(0.0);
        let base_hi = hi - d.max(0.0);
        let shared = rng.random_range(base_lo..base_hi);
        let row: Vec<[f64; 2]> = (0..nu)
            .map(|_| {
                let base = if spec.exchangeable { shared } else { rng.random_range(base_lo..base_hi) };
                if spec.iv_compliant || !spec.instrument {
                    [base, base + d]
                } else {
                    [base, rng.random_range(lo..hi)]
                }
            })
            .collect();
        p_a.push(row);
    }
    let mean_y: Vec<Vec<[f64; 2]>> = (0..nl)
        .map(|_| {
            (0..nu)
                .map(|_| {
                    if spec.binary_outcome {
                        [rng.random::<f64>(), rng.random::<f64>()]
                    } else {
                        [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]
                    }
                })
                .collect()
        })
        .collect();
    let law = StructuralLaw {
        covariate_names: (0..spec.factor_levels.len()).map(|j| format!("l{}", j + 1)).collect(),
        factor_levels: spec.factor_levels.clone(),
        p_u,
        p_l,
        p_z1_given_l: p_z,
        p_a1_given_zlu: p_a,
        mean_y_given_alu: mean_y,
        outcome_noise: if spec.binary_outcome {
            OutcomeNoise::Bernoulli
        } else {
            OutcomeNoise::Gaussian { sigma: 0.5 }
        },
    };
    debug_assert!(law.validate().is_ok());
    law
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMode {
    Observational,
    TwoArmTrial,
    PreferenceTrial,
}

/// SplitMix64 finalizer applied to `seed + index`; the documented rule for
/// deriving independent replicate streams.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut x = seed.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15));
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Fresh RNG for replicate `index` under `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, index))
}

fn draw_index<R: Rng>(rng: &mut R, pmf: &[f64]) -> usize {
    let x: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in pmf.iter().enumerate() {
        acc += p;
        if x < acc {
            return i;
        }
    }
    pmf.len() - 1
}

/// Draws `n` rows. Deterministic given `seed`.
pub fn draw_sample(law: &StructuralLaw, n: usize, seed: u64, mode: SampleMode) -> Result<Dataset, SimulateError> {
    law.validate()?;
    if n == 0 {
        return Err(SimulateError::InvalidLaw("sample size must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let space = law.space();
    let normal = match law.outcome_noise {
        OutcomeNoise::Gaussian { sigma } => Some(Normal::new(0.0, sigma).map_err(|e| SimulateError::InvalidLaw(e.to_string()))?),
        _ => None,
    };
    let outcome = |rng: &mut ChaCha8Rng, mean: f64| -> f64 {
        match law.outcome_noise {
            OutcomeNoise::Degenerate => mean,
            OutcomeNoise::Gaussian { .. } => mean + normal.unwrap().sample(rng),
            OutcomeNoise::Bernoulli => f64::from(u8::from(rng.random::<f64>() < mean)),
        }
    };
    let mut obs = Vec::new();
    let mut recs = Vec::new();
    for _ in 0..n {
        let l = draw_index(&mut rng, &law.p_l);
        let u = draw_index(&mut rng, &law.p_u);
        let z = match &law.p_z1_given_l {
            Some(p) => Some(u8::from(rng.random::<f64>() < p[l])),
            None => None,
        };
        let a = u8::from(rng.random::<f64>() < law.p_a1_given_zlu[l][u][z.unwrap_or(0) as usize]);
        let context: Context = space.context(l);
        match mode {
            SampleMode::Observational => {
                let y = outcome(&mut rng, law.mean_y_given_alu[l][u][a as usize]);
                obs.push(Observation { z, context, reals: Vec::new(), a, y });
            }
            SampleMode::TwoArmTrial => {
                let a_star = u8::from(rng.random::<bool>());
                let y = outcome(&mut rng, law.mean_y_given_alu[l][u][a_star as usize]);
                let arm = if a_star == 1 { Arm::Assigned1 } else { Arm::Assigned0 };
                recs.push(PreferenceTrialRecord { z, context, reals: Vec::new(), a: None, a_star, arm, y });
            }
            SampleMode::PreferenceTrial => {
                let (arm, a_star) = match rng.random_range(0..3u8) {
                    0 => (Arm::Assigned0, 0),
                    1 => (Arm::Assigned1, 1),
                    _ => (Arm::Preference, a),
                };
                let y = outcome(&mut rng, law.mean_y_given_alu[l][u][a_star as usize]);
                recs.push(PreferenceTrialRecord { z, context, reals: Vec::new(), a: Some(a), a_star, arm, y });
            }
        }
    }
    let mut schema = law.schema();
    let rows = if mode == SampleMode::Observational {
        Rows::Observational(obs)
    } else {
        schema.row_kind = RowKind::PreferenceTrial;
        Rows::PreferenceTrial(recs)
    };
    Dataset::new(schema, rows).map_err(|e| SimulateError::InvalidLaw(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(id: &str) -> StructuralLaw {
        build_example_law(id, ExampleParams::default()).unwrap()
    }

    #[test]
    fn icu_law_orders_regime_values() {
        let law = ex("icu");
        let v = |k| oracle_value(&law, &true_regime(&law, k).unwrap(), None).unwrap();
        let obs = oracle_value(&law, &Regime::observed(law.space()), None).unwrap();
        let (opt, sup, zsup) = (v(RegimeKind::OptimalL), v(RegimeKind::SuperoptimalLA), v(RegimeKind::SuperoptimalLAZ));
        assert!(obs < opt && opt < sup && sup <= zsup + 1e-12);
        assert_eq!(law.schema().covariates.len(), 3);
    }

    #[test]
    fn example_treatment_probabilities() {
        assert!((ex("ex1").p_a1_given_zlu[0][1][1] - 0.9).abs() < 1e-15);
        assert!((ex("ex2").p_a1_given_zlu[0][0][0] - 0.6).abs() < 1e-15);
        assert!((ex("ex3").p_a1_given_zlu[0][1][1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn ex3_rejects_out_of_range_c() {
        for c in [0.0, 0.4, -1.0] {
            let p = ExampleParams { c, include_w: false };
            assert!(matches!(build_example_law("ex3", p), Err(SimulateError::ParameterOutOfRange(_))));
        }
        assert!(matches!(build_example_law("ex9", ExampleParams::default()), Err(SimulateError::UnknownExample(_))));
    }

    #[test]
    fn ex1_conditional_means() {
        let law = ex("ex1");
        let m = |a, c| oracle_conditional_mean(&law, a, c).unwrap();
        assert!((m(1, Condition::all().natural(1)) - 3.0 / 13.0).abs() < 1e-14);
        assert!((m(0, Condition::all().natural(1)) + 3.0 / 13.0).abs() < 1e-14);
        assert!((m(1, Condition::all().natural(0)) + 3.0 / 7.0).abs() < 1e-14);
        assert!((m(0, Condition::all().natural(0)) - 3.0 / 7.0).abs() < 1e-14);
        assert!((law.probability(Condition::all().natural(1)) - 0.65).abs() < 1e-14);
    }

    #[test]
    fn ex3_conditional_means() {
        let law = ex("ex3");
        let m = |a, nat, z| oracle_conditional_mean(&law, a, Condition::all().natural(nat).instrument(z)).unwrap();
        assert!((m(1, 1, 1) - 0.4).abs() < 1e-14);
        assert!((m(0, 1, 1) - 19.0 / 40.0).abs() < 1e-14);
        assert!((m(1, 0, 0) - 11.0 / 20.0).abs() < 1e-14);
        // The stated law forces P(U=1 | A=0, Z=0) = 7/16, hence 29/80.
        assert!((m(0, 0, 0) - 29.0 / 80.0).abs() < 1e-14);
    }

    #[test]
    fn zero_probability_condition() {
        let mut law = ex("ex3");
        law.p_z1_given_l = Some(vec![1.0]);
        assert!(matches!(
            oracle_conditional_mean(&law, 1, Condition::all().instrument(0)),
            Err(SimulateError::ZeroProbability)
        ));
    }

    #[test]
    fn example_values() {
        for (id, obs, opt, sup) in [("ex1", 0.3, 0.0, 0.3), ("ex2", -0.3, 0.0, 0.3)] {
            let law = ex(id);
            let v = |k| oracle_value(&law, &true_regime(&law, k).unwrap(), None).unwrap();
            assert!((v(RegimeKind::Observed) - obs).abs() < 1e-12, "{id}");
            assert!((v(RegimeKind::OptimalL) - opt).abs() < 1e-12, "{id}");
            assert!((v(RegimeKind::SuperoptimalLA) - sup).abs() < 1e-12, "{id}");
        }
    }

    #[test]
    fn ex3_instrument_regime() {
        let law = ex("ex3");
        let g = true_regime(&law, RegimeKind::SuperoptimalLAZ).unwrap();
        assert_eq!(g.assign(1, 0, Some(1)), Ok(0));
        assert_eq!(g.assign(0, 0, Some(0)), Ok(1));
    }

    #[test]
    fn inert_covariate_keeps_values() {
        let law = build_example_law("ex1", ExampleParams { c: 0.2, include_w: true }).unwrap();
        let g = true_regime(&law, RegimeKind::SuperoptimalLA).unwrap();
        assert!((oracle_value(&law, &g, None).unwrap() - 0.3).abs() < 1e-12);
        assert!((oracle_value(&law, &g, Some(1)).unwrap() - 0.3).abs() < 1e-12);
    }

    #[test]
    fn sampling_is_deterministic() {
        let law = ex("ex3");
        for mode in [SampleMode::Observational, SampleMode::TwoArmTrial, SampleMode::PreferenceTrial] {
            let a = draw_sample(&law, 50, 7, mode).unwrap();
            let b = draw_sample(&law, 50, 7, mode).unwrap();
            assert_eq!(a, b);
        }
        assert_eq!(draw_sample(&law, 1, 3, SampleMode::Observational).unwrap().len(), 1);
    }

    #[test]
    fn ex1_sample_marginals() {
        let law = ex("ex1");
        let d = draw_sample(&law, 1000, 11, SampleMode::Observational).unwrap();
        let pa = d.observations().unwrap().iter().filter(|o| o.a == 1).count() as f64 / 1000.0;
        assert!((pa - 0.65).abs() < 0.05);
    }

    #[test]
    fn preference_arm_share() {
        let d = draw_sample(&ex("ex3"), 100_000, 5, SampleMode::PreferenceTrial).unwrap();
        let share = d.trial_records().unwrap().iter().filter(|r| r.arm == Arm::Preference).count() as f64 / 1e5;
        assert!((share - 1.0 / 3.0).abs() < 0.01);
    }

    #[test]
    fn random_laws_are_valid() {
        let mut rng = replicate_rng(1, 0);
        for _ in 0..50 {
            let law = random_law(&mut rng, &RandomLawSpec::default());
            law.validate().unwrap();
            for row in &law.p_a1_given_zlu {
                for p in row {
                    assert!(p.iter().all(|&x| (PMF_FLOOR..=1.0 - PMF_FLOOR).contains(&x)));
                    assert!(((p[1] - p[0]).abs()) >= 0.1 - 1e-12);
                }
            }
        }
    }

    #[test]
    fn derived_seeds_differ() {
        let s: std::collections::BTreeSet<u64> = (0..1000).map(|i| derive_seed(42, i)).collect();
        assert_eq!(s.len(), 1000);
    }

    #[test]
    fn law_json_round_trip() {
        let law = ex("ex1");
        let back: StructuralLaw = serde_json::from_str(&serde_json::to_string(&law).unwrap()).unwrap();
        assert_eq!(law, back);
    }
}
