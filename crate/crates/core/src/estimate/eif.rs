//! Influence functions of `ψ₁(a,l)`, `Ψ(a,l) = E(Y^a | A=1-a, l)` and the
//! marginal value of a covariate-and-intent regime, plus one-step estimators.
//!
//! The instrument enters with the symmetric coding `Z̃ = 2Z - 1`.

use super::nuisance::Nuisances;
use super::{EstimateError, Unit};
use crate::regime::Regime;

fn pm(x: u8) -> f64 {
    2.0 * f64::from(x) - 1.0
}

fn ind(b: bool) -> f64 {
    f64::from(u8::from(b))
}

/// Influence value of `ψ₁(a, l)` at one row.
pub fn eif_psi1(u: &Unit, n: &Nuisances, a: u8, l: usize) -> f64 {
    let pl = n.p_l[l];
    if u.l != l || pl <= 0.0 {
        return 0.0;
    }
    let zt = pm(u.z);
    let f = n.f_z(l, u.z);
    let d = n.delta[l];
    let psi = n.psi1(a, l);
    let r = pm(u.a) * u.y * ind(u.a == a);
    let m_obs = n.signed_mean[l][u.z as usize][a as usize];
    let m_sum: f64 = (0..2u8).map(|z| pm(z) * n.signed_mean[l][z as usize][a as usize]).sum();
    let e_obs = n.signed_treatment_mean(l, u.z);
    let lead = zt * r / (d * f * pl);
    let correction = zt * m_obs / (d * f * pl) - m_sum / (d * pl) + zt * (pm(u.a) - e_obs) / (2.0 * f * d * pl) * psi;
    // E[Z̃ R / (δ f P(L=l)) | L = l]
    let centering = m_sum / (d * pl);
    lead - correction - centering
}

/// Influence value of `Ψ(a, l) = E(Y^a | A = 1-a, L = l)` at one row.
pub fn eif_psi(u: &Unit, n: &Nuisances, a: u8, l: usize) -> f64 {
    let pl = n.p_l[l];
    if u.l != l || pl <= 0.0 {
        return 0.0;
    }
    let p_same = n.p_a_given_l(l, a);
    let p_other = n.p_a_given_l(l, 1 - a);
    let mean_same = n.mean_y_given_al[l][a as usize];
    let psi = n.psi1(a, l);
    let if_psi1 = eif_psi1(u, n, a, l);
    let if_mean = ind(u.a == a) / (pl * p_same) * (u.y - mean_same);
    let if_same = (ind(u.a == a) - p_same) / pl;
    let if_other = (ind(u.a == 1 - a) - p_other) / pl;
    (if_psi1 * p_other - psi * if_other - (if_mean * p_same + mean_same * if_same) * p_other + mean_same * p_same * if_other)
        / (p_other * p_other)
}

/// Influence value of `E(Y^g)` for a regime keyed on `(intent, context)`.
pub fn eif_value(u: &Unit, regime: &Regime, n: &Nuisances) -> Result<f64, EstimateError> {
    if regime.uses_instrument() {
        return Err(EstimateError::InvalidConfig("influence function is defined for regimes keyed on (intent, context)".into()));
    }
    let mut acc = 0.0;
    for l in 0..n.n_contexts() {
        for a in 0..2u8 {
            let g = regime.assign(a, l, None)?;
            let hit = ind(u.a == a && u.l == l);
            let p_al = n.p_al(l, a);
            if g == a {
                acc += hit * (u.y - n.mean_y_given_al[l][a as usize]);
            } else {
                acc += eif_psi(u, n, 1 - a, l) * p_al;
            }
            acc += n.cmgn(g, a, l) * (hit - p_al);
        }
    }
    Ok(acc)
}

fn sample_mean<F: Fn(&Unit) -> f64>(units: &[Unit], f: F) -> f64 {
    units.iter().map(f).sum::<f64>() / units.len() as f64
}

/// Standard error of an asymptotically linear estimator with influence `f`.
pub fn influence_se<F: Fn(&Unit) -> f64>(units: &[Unit], f: F) -> f64 {
    let vals: Vec<f64> = units.iter().map(f).collect();
    let n = vals.len() as f64;
    let m = vals.iter().sum::<f64>() / n;
    (vals.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
}

/// One-step estimate of `E(Y | L=l) - E(Y^a | L=l)`.
pub fn one_step_contrast(units: &[Unit], n: &Nuisances, a: u8, l: usize) -> Result<f64, EstimateError> {
    let pl = n.p_l[l];
    if pl <= 0.0 || units.is_empty() {
        return Err(EstimateError::EmptyContext(l));
    }
    let my = n.mean_y_given_l[l];
    let correction = sample_mean(units, |u| ind(u.l == l) / pl * (u.y - my) - eif_psi1(u, n, a, l));
    Ok(my - n.psi1(a, l) + correction)
}

/// One-step estimate of `Ψ(a, l)`.
pub fn one_step_psi(units: &[Unit], n: &Nuisances, a: u8, l: usize) -> Result<f64, EstimateError> {
    if n.p_l[l] <= 0.0 || units.is_empty() {
        return Err(EstimateError::EmptyContext(l));
    }
    Ok(n.cmgn(a, 1 - a, l) + sample_mean(units, |u| eif_psi(u, n, a, l)))
}
