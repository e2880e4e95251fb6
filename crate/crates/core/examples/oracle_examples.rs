//! Exact regime values on the three worked examples by enumeration.

use superopt::regime::{Regime, RegimeKind};
use superopt::simulate::{build_example_law, oracle_value, true_regime, ExampleParams};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    for id in ["ex1", "ex2", "ex3"] {
        let law = build_example_law(id, ExampleParams::default())?;
        let observed = oracle_value(&law, &Regime::observed(law.space()), None)?;
        print!("{id}: E(Y) = {observed:.4}");
        for kind in [RegimeKind::OptimalL, RegimeKind::SuperoptimalLA, RegimeKind::SuperoptimalLAZ] {
            let g = true_regime(&law, kind)?;
            print!("  {kind} = {:.4}", oracle_value(&law, &g, None)?);
        }
        println!();
    }
    Ok(())
}
