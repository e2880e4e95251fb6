//! Logistic regression by IRLS on cell summaries, saturated against main effects.

use superopt::data::ContextSpace;
use superopt::estimate::{fit_glm, CellStats, Design, Family, GlmSettings, ModelId};

fn main() {
    let space = ContextSpace::new(vec![2, 3]);
    let rates = [0.2, 0.35, 0.5, 0.3, 0.45, 0.7];
    let cells: Vec<CellStats> = rates.iter().map(|&p| CellStats { n: 400.0, sum: 400.0 * p, sumsq: 400.0 * p }).collect();
    let settings = GlmSettings::default();
    for design in [Design::Saturated, Design::MainEffects, Design::InterceptOnly] {
        let fit = fit_glm(ModelId::YGivenL, &space, &cells, design, Family::Binomial, &settings);
        let fitted: Vec<String> = fit.fitted.iter().map(|p| format!("{p:.3}")).collect();
        println!("{design:?}: deviance {:.3}, iterations {}, fitted [{}]", fit.deviance, fit.iterations, fitted.join(", "));
    }
}
