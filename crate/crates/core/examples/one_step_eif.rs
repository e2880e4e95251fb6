//! One-step estimators of cross-world means `E(Y^a | A=1-a)` built on the
//! efficient influence function.

use superopt::estimate::eif::influence_se;
use superopt::estimate::{eif_psi, one_step_contrast, one_step_psi, units, CellTable, EstimationConfig, Nuisances};
use superopt::identify::cmgn_table;
use superopt::simulate::{build_example_law, draw_sample, ExampleParams, SampleMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let law = build_example_law("ex3", ExampleParams::default())?;
    let population = law.observed_law();
    let psi1 = population.psi1_table()?;
    let truth = cmgn_table(&population, &psi1)?;
    let ds = draw_sample(&law, 50_000, 5, SampleMode::Observational)?;
    let n = Nuisances::fit(&CellTable::from_dataset(&ds)?, &EstimationConfig::default())?;
    let us = units(&ds)?;
    for a in 0..2u8 {
        let os = one_step_psi(&us, &n, a, 0)?;
        let se = influence_se(&us, |u| eif_psi(u, &n, a, 0));
        println!("E(Y^{a} | A={}): truth {:.4}  plug-in {:.4}  one-step {os:.4} (se {se:.4})", 1 - a, truth.get(a, 1 - a, 0), n.cmgn(a, 1 - a, 0));
    }
    let contrast = one_step_contrast(&us, &n, 1, 0)?;
    println!("E(Y) - E(Y^1): truth {:.4}  one-step {contrast:.4}", population.mean_y_given_l(0) - psi1.get(1, 0));
    Ok(())
}
