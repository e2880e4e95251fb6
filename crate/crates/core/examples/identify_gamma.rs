//! Identification from the observed law: psi1, intent-conditional means and the gamma map.

use superopt::identify::{cmgn_table, gamma_map, lz_superoptimal_rule, superoptimal_rule};
use superopt::simulate::{build_example_law, ExampleParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let law = build_example_law("ex3", ExampleParams::default())?.observed_law();
    let psi1 = law.psi1_table()?;
    let cmgn = cmgn_table(&law, &psi1)?;
    for intent in 0..2u8 {
        for a in 0..2u8 {
            println!("E(Y^{a} | A={intent}) = {:.4}", cmgn.get(a, intent, 0));
        }
    }
    let gamma = gamma_map(&cmgn);
    println!("gamma = {} ({})", gamma[0] as u8, gamma[0].instruction());
    let sup = superoptimal_rule(&law, &psi1)?;
    let zsup = lz_superoptimal_rule(&law, &psi1)?;
    for intent in 0..2u8 {
        println!(
            "intent {intent}: g_sup = {}, g_zsup(z=0) = {}, g_zsup(z=1) = {}",
            sup.assign(intent, 0, None)?,
            zsup.assign(intent, 0, Some(0))?,
            zsup.assign(intent, 0, Some(1))?
        );
    }
    Ok(())
}
