//! Generalized linear models on cell-aggregated data.
//!
//! Every nuisance regression in the crate has a categorical design, so a fit
//! only needs the per-context sufficient statistics `(n, Σr, Σr²)`. Logit
//! models use IRLS with step-halving; the saturated logit and every Gaussian
//! model have closed forms.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::ContextSpace;

/// Which nuisance a fit belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum ModelId {
    /// `P(A=1 | Z=z, L)`.
    AGivenZl { z: u8 },
    /// `E((2A-1) Y I[A=a] | L, Z=z)`, fit on a shifted response in `[0,1]`
    /// when `Y` is binary.
    SignedOutcome { a: u8, z: u8 },
    YGivenL,
    YGivenAl { a: u8 },
    AGivenL,
    ZGivenL,
}

impl std::fmt::Display for ModelId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ModelId::AGivenZl { z } => write!(f, "a_given_zl(z={z})"),
            ModelId::SignedOutcome { a, z } => write!(f, "y2a1_given_lz(a={a},z={z})"),
            ModelId::YGivenL => write!(f, "y_given_l"),
            ModelId::YGivenAl { a } => write!(f, "y_given_al(a={a})"),
            ModelId::AGivenL => write!(f, "a_given_l"),
            ModelId::ZGivenL => write!(f, "z_given_l"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Design {
    /// One free mean per context.
    #[default]
    Saturated,
    /// Intercept plus one dummy per non-reference level of each factor.
    MainEffects,
    InterceptOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Binomial,
    Gaussian,
}

/// Sufficient statistics of a response within one context.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CellStats {
    pub n: f64,
    pub sum: f64,
    pub sumsq: f64,
}

impl CellStats {
    pub fn add(&mut self, r: f64, w: f64) {
        self.n += w;
        self.sum += w * r;
        self.sumsq += w * r * r;
    }

    pub fn mean(&self) -> Option<f64> {
        (self.n > 0.0).then(|| self.sum / self.n)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlmSettings {
    pub tol: f64,
    pub max_iter: usize,
    /// Contexts with fewer rows than this are reported as low-count.
    pub min_cell: f64,
}

impl Default for GlmSettings {
    fn default() -> Self {
        GlmSettings { tol: 1e-8, max_iter: 100, min_cell: 5.0 }
    }
}

/// Coefficients beyond this magnitude signal (quasi-)separation.
pub const SEPARATION_BOUND: f64 = 30.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuisanceFit {
    pub model_id: ModelId,
    pub family: Family,
    pub design: Design,
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub deviance: f64,
    pub separation: bool,
    /// Fitted mean per context.
    pub fitted: Vec<f64>,
    /// Contexts with fewer than `min_cell` rows (zero-row contexts take the
    /// pooled mean under the saturated design).
    pub low_count: Vec<usize>,
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

fn expit(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn binomial_deviance(cells: &[CellStats], mu: &[f64]) -> f64 {
    let term = |k: f64, e: f64| if k > 0.0 { k * (k / e).ln() } else { 0.0 };
    cells
        .iter()
        .zip(mu)
        .filter(|(c, _)| c.n > 0.0)
        .map(|(c, &m)| 2.0 * (term(c.sum, c.n * m) + term(c.n - c.sum, c.n * (1.0 - m))))
        .sum::<f64>()
        .max(0.0)
}

fn gaussian_deviance(cells: &[CellStats], mu: &[f64]) -> f64 {
    cells.iter().zip(mu).map(|(c, &m)| c.sumsq - 2.0 * m * c.sum + c.n * m * m).sum::<f64>().max(0.0)
}

/// Design rows, one per context, with columns that are zero on every
/// populated context removed.
pub fn design_matrix(space: &ContextSpace, design: Design, cells: &[CellStats]) -> DMatrix<f64> {
    let nl = space.len();
    let mut cols: Vec<Vec<f64>> = vec![vec![1.0; nl]];
    match design {
        Design::InterceptOnly => {}
        Design::Saturated => {
            cols = (0..nl).map(|j| (0..nl).map(|i| f64::from(u8::from(i == j))).collect()).collect();
        }
        Design::MainEffects => {
            for (f, &k) in space.radices().iter().enumerate() {
                for level in 1..k {
                    cols.push((0..nl).map(|i| f64::from(u8::from(space.context(i).0[f] as usize == level))).collect());
                }
            }
        }
    }
    cols.retain(|col| col.iter().zip(cells).any(|(&x, c)| x != 0.0 && c.n > 0.0));
    DMatrix::from_fn(nl, cols.len(), |i, j| cols[j][i])
}

fn weighted_solve(x: &DMatrix<f64>, w: &[f64], z: &[f64]) -> DVector<f64> {
    let p = x.ncols();
    let mut xtwx = DMatrix::zeros(p, p);
    let mut xtwz = DVector::zeros(p);
    for i in 0..x.nrows() {
        if w[i] <= 0.0 {
            continue;
        }
        let row = x.row(i);
        for a in 0..p {
            xtwz[a] += w[i] * row[a] * z[i];
            for b in 0..p {
                xtwx[(a, b)] += w[i] * row[a] * row[b];
            }
        }
    }
    if let Some(ch) = xtwx.clone().cholesky() {
        return ch.solve(&xtwz);
    }
    // rank-deficient designs: minimal-norm least squares
    xtwx.svd(true, true).solve(&xtwz, 1e-12).unwrap_or_else(|_| DVector::zeros(p))
}

fn low_count(cells: &[CellStats], settings: &GlmSettings) -> Vec<usize> {
    cells.iter().enumerate().filter(|(_, c)| c.n < settings.min_cell).map(|(i, _)| i).collect()
}

/// Fits one nuisance model over contexts.
pub fn fit_glm(
    model_id: ModelId,
    space: &ContextSpace,
    cells: &[CellStats],
    design: Design,
    family: Family,
    settings: &GlmSettings,
) -> NuisanceFit {
    let total = cells.iter().fold(CellStats::default(), |mut acc, c| {
        acc.n += c.n;
        acc.sum += c.sum;
        acc.sumsq += c.sumsq;
        acc
    });
    let pooled = total.mean().unwrap_or(match family {
        Family::Binomial => 0.5,
        Family::Gaussian => 0.0,
    });
    let low = low_count(cells, settings);
    if design == Design::Saturated {
        let fitted: Vec<f64> = cells.iter().map(|c| c.mean().unwrap_or(pooled)).collect();
        let (coefficients, separation) = match family {
            Family::Binomial => {
                let mut sep = false;
                let coef = cells
                    .iter()
                    .filter_map(|c| c.mean())
                    .map(|m| {
                        if m <= 0.0 || m >= 1.0 {
                            sep = true;
                            (SEPARATION_BOUND + 5.0).copysign(m - 0.5)
                        } else {
                            logit(m)
                        }
                    })
                    .collect();
                (coef, sep)
            }
            Family::Gaussian => (cells.iter().filter_map(|c| c.mean()).collect(), false),
        };
        let deviance = match family {
            Family::Binomial => binomial_deviance(cells, &fitted),
            Family::Gaussian => gaussian_deviance(cells, &fitted),
        };
        return NuisanceFit {
            model_id,
            family,
            design,
            coefficients,
            converged: true,
            iterations: 0,
            deviance,
            separation,
            fitted,
            low_count: low,
        };
    }
    let x = design_matrix(space, design, cells);
    match family {
        Family::Gaussian => {
            let w: Vec<f64> = cells.iter().map(|c| c.n).collect();
            let z: Vec<f64> = cells.iter().map(|c| c.mean().unwrap_or(0.0)).collect();
            let beta = weighted_solve(&x, &w, &z);
            let fitted: Vec<f64> = (&x * &beta).iter().copied().collect();
            NuisanceFit {
                model_id,
                family,
                design,
                coefficients: beta.iter().copied().collect(),
                converged: true,
                iterations: 1,
                deviance: gaussian_deviance(cells, &fitted),
                separation: false,
                fitted,
                low_count: low,
            }
        }
        Family::Binomial => irls_logit(model_id, design, &x, cells, settings, low),
    }
}

/// Logistic regression by iteratively reweighted least squares.
pub fn irls_logit(
    model_id: ModelId,
    design: Design,
    x: &DMatrix<f64>,
    cells: &[CellStats],
    settings: &GlmSettings,
    low_count: Vec<usize>,
) -> NuisanceFit {
    let nl = cells.len();
    let mut mu: Vec<f64> = cells.iter().map(|c| (c.sum + 0.5) / (c.n + 1.0)).collect();
    let mut eta: Vec<f64> = mu.iter().map(|&m| logit(m)).collect();
    let mut beta: Option<DVector<f64>> = None;
    let mut dev = binomial_deviance(cells, &mu);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=settings.max_iter {
        iterations = it;
        let w: Vec<f64> = (0..nl).map(|i| cells[i].n * mu[i] * (1.0 - mu[i])).collect();
        let z: Vec<f64> = (0..nl)
            .map(|i| {
                let ybar = cells[i].mean().unwrap_or(mu[i]);
                eta[i] + (ybar - mu[i]) / (mu[i] * (1.0 - mu[i]))
            })
            .collect();
        let mut next = weighted_solve(x, &w, &z);
        let mut new_eta: Vec<f64> = (x * &next).iter().copied().collect();
        let mut new_mu: Vec<f64> = new_eta.iter().map(|&e| expit(e).clamp(1e-15, 1.0 - 1e-15)).collect();
        let mut new_dev = binomial_deviance(cells, &new_mu);
        if let Some(old) = &beta {
            let mut halvings = 0;
            while !(new_dev <= dev * (1.0 + 1e-12) + 1e-12) && halvings < 30 {
                next = (&next + old) * 0.5;
                new_eta = (x * &next).iter().copied().collect();
                new_mu = new_eta.iter().map(|&e| expit(e).clamp(1e-15, 1.0 - 1e-15)).collect();
                new_dev = binomial_deviance(cells, &new_mu);
                halvings += 1;
            }
        }
        let change = (new_dev - dev).abs() / (new_dev.abs() + 0.1);
        beta = Some(next);
        eta = new_eta;
        mu = new_mu;
        dev = new_dev;
        if change < settings.tol && it > 1 {
            converged = true;
            break;
        }
    }
    let beta = beta.unwrap_or_else(|| DVector::zeros(x.ncols()));
    let separation = beta.iter().any(|b| b.abs() > SEPARATION_BOUND);
    NuisanceFit {
        model_id,
        family: Family::Binomial,
        design,
        coefficients: beta.iter().copied().collect(),
        converged,
        iterations,
        deviance: dev,
        separation,
        fitted: mu,
        low_count,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cells(pairs: &[(f64, f64)]) -> Vec<CellStats> {
        pairs.iter().map(|&(n, s)| CellStats { n, sum: s, sumsq: s }).collect()
    }

    #[test]
    fn intercept_only_is_sample_mean() {
        let c = cells(&[(1000.0, 297.0)]);
        let fit = fit_glm(ModelId::YGivenL, &ContextSpace::new(vec![]), &c, Design::InterceptOnly, Family::Binomial, &GlmSettings::default());
        assert!(fit.converged);
        assert!((fit.fitted[0] - 0.297).abs() < 1e-8);
    }

    #[test]
    fn irls_on_saturated_design_matches_cell_means() {
        let space = ContextSpace::new(vec![2, 2]);
        let c = cells(&[(40.0, 10.0), (60.0, 45.0), (25.0, 5.0), (80.0, 41.0)]);
        let x = design_matrix(&space, Design::Saturated, &c);
        let fit = irls_logit(ModelId::AGivenL, Design::Saturated, &x, &c, &GlmSettings::default(), vec![]);
        assert!(fit.converged);
        for (f, cell) in fit.fitted.iter().zip(&c) {
            assert!((f - cell.mean().unwrap()).abs() < 1e-8);
        }
    }

    #[test]
    fn main_effects_is_exact_for_additive_logits() {
        let space = ContextSpace::new(vec![2, 3]);
        let truth = |i: usize| {
            let ctx = space.context(i);
            expit(-0.5 + 0.8 * f64::from(ctx.0[0]) - 0.3 * f64::from(ctx.0[1]))
        };
        let c: Vec<CellStats> = (0..6).map(|i| CellStats { n: 1e6, sum: 1e6 * truth(i), sumsq: 1e6 * truth(i) }).collect();
        let fit = fit_glm(ModelId::AGivenL, &space, &c, Design::MainEffects, Family::Binomial, &GlmSettings::default());
        assert!(fit.converged);
        for i in 0..6 {
            assert!((fit.fitted[i] - truth(i)).abs() < 1e-9);
        }
    }

    #[test]
    fn separation_is_flagged() {
        let space = ContextSpace::new(vec![2]);
        let c = cells(&[(2.0, 0.0), (2.0, 2.0)]);
        let fit = fit_glm(ModelId::AGivenL, &space, &c, Design::MainEffects, Family::Binomial, &GlmSettings::default());
        assert!(fit.separation, "{:?}", fit.coefficients);
        let sat = fit_glm(ModelId::AGivenL, &space, &c, Design::Saturated, Family::Binomial, &GlmSettings::default());
        assert!(sat.separation);
    }

    #[test]
    fn empty_cell_takes_pooled_mean() {
        let space = ContextSpace::new(vec![3]);
        let c = cells(&[(10.0, 4.0), (0.0, 0.0), (10.0, 6.0)]);
        let fit = fit_glm(ModelId::YGivenL, &space, &c, Design::Saturated, Family::Binomial, &GlmSettings::default());
        assert!((fit.fitted[1] - 0.5).abs() < 1e-12);
        assert_eq!(fit.low_count, vec![1]);
        assert!(fit.coefficients.iter().all(|b| b.is_finite()));
    }

    #[test]
    fn gaussian_main_effects_weighted_least_squares() {
        let space = ContextSpace::new(vec![2]);
        let c = vec![CellStats { n: 3.0, sum: 3.0, sumsq: 5.0 }, CellStats { n: 1.0, sum: 4.0, sumsq: 16.0 }];
        let fit = fit_glm(ModelId::YGivenL, &space, &c, Design::MainEffects, Family::Gaussian, &GlmSettings::default());
        assert!((fit.fitted[0] - 1.0).abs() < 1e-12 && (fit.fitted[1] - 4.0).abs() < 1e-12);
        assert!((fit.deviance - 2.0).abs() < 1e-12);
    }
}
