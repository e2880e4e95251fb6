//! Plug-in regimes and marginal value estimates.

use serde::{Deserialize, Serialize};

use super::nuisance::Nuisances;
use super::{CellTable, EstimateError, EstimationConfig, ValueForm};
use crate::data::Dataset;
use crate::identify::{optimal_rule, superoptimal_from_means, Gamma};
use crate::regime::{Regime, RegimeKind, TIE_TOL};

/// The three learned rules and the gamma map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatedRegimes {
    pub optimal: Regime,
    pub superoptimal: Regime,
    pub instrument_superoptimal: Regime,
    pub gamma: Vec<Gamma>,
}

impl EstimatedRegimes {
    pub fn get(&self, kind: RegimeKind) -> Option<&Regime> {
        match kind {
            RegimeKind::OptimalL => Some(&self.optimal),
            RegimeKind::SuperoptimalLA => Some(&self.superoptimal),
            RegimeKind::SuperoptimalLAZ => Some(&self.instrument_superoptimal),
            _ => None,
        }
    }
}

/// Argmax rules and the plug-in gamma map from fitted nuisances.
pub fn estimate_regimes(n: &Nuisances) -> EstimatedRegimes {
    let space = n.space();
    let psi1 = n.psi1_table();
    let optimal = optimal_rule(space.clone(), &psi1);
    let superoptimal = superoptimal_from_means(space.clone(), &n.mean_y_given_l, &psi1).expect("means cover every context");
    let instrument_superoptimal = Regime::from_fn(RegimeKind::SuperoptimalLAZ, space, true, true, |l, i, z| {
        if n.cmgn_z(i, i, l, z) >= n.cmgn_z(1 - i, i, l, z) - TIE_TOL {
            i
        } else {
            1 - i
        }
    });
    let gamma = (0..n.n_contexts())
        .map(|l| Gamma::classify(n.cmgn(1, 1, l) - n.cmgn(0, 1, l), n.cmgn(1, 0, l) - n.cmgn(0, 0, l)))
        .collect();
    EstimatedRegimes { optimal, superoptimal, instrument_superoptimal, gamma }
}

/// `V̂(a, l)`: plug-in `E(Y^{1-a} | A=a, l)`.
fn cross_world(n: &Nuisances, a: u8, l: usize, z: Option<u8>) -> f64 {
    match z {
        Some(z) => n.cmgn_z(1 - a, a, l, z),
        None => n.cmgn(1 - a, a, l),
    }
}

/// Value of `regime` over the rows summarized in `cells`.
pub fn estimate_value_cells(cells: &CellTable, regime: &Regime, n: &Nuisances, form: ValueForm) -> Result<f64, EstimateError> {
    if regime.space().len() != cells.n_contexts() {
        return Err(EstimateError::InvalidConfig("regime and data have different context spaces".into()));
    }
    let total = cells.total();
    if total <= 0.0 {
        return Err(EstimateError::EmptySample);
    }
    let mut acc = 0.0;
    for l in 0..cells.n_contexts() {
        for z in 0..2u8 {
            for a in 0..2u8 {
                let c = cells.cells[l][z as usize][a as usize];
                if c.n == 0.0 {
                    continue;
                }
                let zi = regime.uses_instrument().then_some(z);
                let g = regime.assign(a, l, zi)?;
                acc += if g != a {
                    c.n * cross_world(n, a, l, zi)
                } else {
                    match form {
                        ValueForm::Ipw => c.sum,
                        ValueForm::Regression => {
                            c.n * match zi {
                                Some(z) => n.mean_y_given_azl(l, z, a),
                                None => n.mean_y_given_al[l][a as usize],
                            }
                        }
                    }
                };
            }
        }
    }
    Ok(acc / total)
}

/// Refits nuisances on `eval` and returns the value of a fixed regime.
pub fn estimate_value(eval: &Dataset, regime: &Regime, cfg: &EstimationConfig) -> Result<f64, EstimateError> {
    let cells = CellTable::from_dataset(eval)?;
    let n = Nuisances::fit(&cells, cfg)?;
    estimate_value_cells(&cells, regime, &n, cfg.value_form)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identify::{gamma_map, lz_superoptimal_rule, reconstruct_superoptimal};
    use crate::simulate::{build_example_law, draw_sample, oracle_value, random_law, replicate_rng, true_regime, ExampleParams, RandomLawSpec, SampleMode};

    fn cfg() -> EstimationConfig {
        EstimationConfig::default()
    }

    #[test]
    fn observed_regime_is_sample_mean() {
        for (id, seed) in [("ex1", 1), ("ex3", 2)] {
            let law = build_example_law(id, ExampleParams::default()).unwrap();
            let ds = draw_sample(&law, 5000, seed, SampleMode::Observational).unwrap();
            let cells = CellTable::from_dataset(&ds).unwrap();
            let ybar = cells.mean_y();
            for form in [ValueForm::Regression, ValueForm::Ipw] {
                let c = EstimationConfig { value_form: form, ..cfg() };
                let v = estimate_value(&ds, &Regime::observed(law.space()), &c).unwrap();
                assert!((v - ybar).abs() < 1e-12, "{id} {form:?}: {v} vs {ybar}");
            }
        }
    }

    #[test]
    fn true_superoptimal_values_on_examples() {
        for (id, truth, seed) in [("ex1", 0.3, 5), ("ex2", 0.3, 6)] {
            let law = build_example_law(id, ExampleParams::default()).unwrap();
            let ds = draw_sample(&law, 100_000, seed, SampleMode::Observational).unwrap();
            let g = true_regime(&law, RegimeKind::SuperoptimalLA).unwrap();
            let v = estimate_value(&ds, &g, &cfg()).unwrap();
            let us = crate::estimate::units(&ds).unwrap();
            let n = Nuisances::fit(&CellTable::from_dataset(&ds).unwrap(), &cfg()).unwrap();
            let se = crate::estimate::eif::influence_se(&us, |u| crate::estimate::eif_value(u, &g, &n).unwrap());
            let tol = 0.02f64.max(3.0 * se);
            assert!((v - truth).abs() < tol, "{id}: {v} se {se}");
            let ipw = estimate_value(&ds, &g, &EstimationConfig { value_form: ValueForm::Ipw, ..cfg() }).unwrap();
            assert!((ipw - truth).abs() < tol + 0.01, "{id} ipw: {ipw}");
        }
    }

    #[test]
    fn ex3_instrument_regime_sign_pattern() {
        let law = build_example_law("ex3", ExampleParams::default()).unwrap();
        let ds = draw_sample(&law, 100_000, 7, SampleMode::Observational).unwrap();
        let n = Nuisances::fit(&CellTable::from_dataset(&ds).unwrap(), &cfg()).unwrap();
        let r = estimate_regimes(&n);
        assert_eq!(r.instrument_superoptimal.assign(1, 0, Some(1)), Ok(0));
        assert_eq!(r.instrument_superoptimal.assign(0, 0, Some(0)), Ok(1));
        let truth = lz_superoptimal_rule(&law.observed_law(), &law.observed_law().psi1_table().unwrap()).unwrap();
        assert_eq!(r.instrument_superoptimal, truth);
    }

    #[test]
    fn exchangeable_law_superoptimal_matches_optimal() {
        let mut rng = replicate_rng(21, 0);
        let spec = RandomLawSpec { factor_levels: vec![2], exchangeable: true, ..RandomLawSpec::default() };
        let law = random_law(&mut rng, &spec);
        let ds = draw_sample(&law, 100_000, 9, SampleMode::Observational).unwrap();
        let n = Nuisances::fit(&CellTable::from_dataset(&ds).unwrap(), &cfg()).unwrap();
        let r = estimate_regimes(&n);
        let population = law.observed_law();
        let psi = population.psi1_table().unwrap();
        for l in 0..2 {
            // skip near-tie contexts where the sample cannot resolve the sign
            if (psi.get(1, l) - psi.get(0, l)).abs() < 0.05 {
                continue;
            }
            for i in 0..2 {
                assert_eq!(r.superoptimal.assign(i, l, None), r.optimal.assign(i, l, None));
            }
        }
    }

    #[test]
    fn pathological_sample_still_yields_total_regimes() {
        let law = build_example_law("ex1", ExampleParams { include_w: true, ..ExampleParams::default() }).unwrap();
        let ds = draw_sample(&law, 10, 3, SampleMode::Observational).unwrap();
        let cells = CellTable::from_dataset(&ds).unwrap();
        match Nuisances::fit(&cells, &cfg()) {
            Ok(n) => {
                let r = estimate_regimes(&n);
                for l in 0..n.n_contexts() {
                    for i in 0..2 {
                        assert!(r.superoptimal.assign(i, l, None).is_ok());
                        assert!(r.optimal.assign(i, l, None).is_ok());
                        for z in 0..2 {
                            assert!(r.instrument_superoptimal.assign(i, l, Some(z)).is_ok());
                        }
                    }
                }
                assert!(n.fits.iter().any(|f| !f.low_count.is_empty()));
            }
            Err(e) => assert!(matches!(e, EstimateError::EmptyInstrumentStratum { .. } | EstimateError::EmptyTreatmentStratum { .. })),
        }
    }

    #[test]
    fn plug_in_gamma_reconstructs_on_population_nuisances() {
        let law = build_example_law("ex2", ExampleParams::default()).unwrap().observed_law();
        let n = Nuisances::from_law(&law).unwrap();
        let r = estimate_regimes(&n);
        assert_eq!(reconstruct_superoptimal(&r.gamma, &r.optimal), r.superoptimal);
        let psi = law.psi1_table().unwrap();
        assert_eq!(r.gamma, gamma_map(&crate::identify::cmgn_table(&law, &psi).unwrap()));
    }

    #[test]
    fn dominance_with_true_regimes_at_scale() {
        let law = build_example_law("ex3", ExampleParams::default()).unwrap();
        let ds = draw_sample(&law, 100_000, 13, SampleMode::Observational).unwrap();
        let v = |k| estimate_value(&ds, &true_regime(&law, k).unwrap(), &cfg()).unwrap();
        let sup = v(RegimeKind::SuperoptimalLA);
        let opt = v(RegimeKind::OptimalL);
        let obs = estimate_value(&ds, &Regime::observed(law.space()), &cfg()).unwrap();
        assert!(sup >= opt - 0.02 && sup >= obs - 0.02, "{sup} {opt} {obs}");
        let truth = oracle_value(&law, &true_regime(&law, RegimeKind::SuperoptimalLA).unwrap(), None).unwrap();
        assert!((sup - truth).abs() < 0.02);
    }
}
