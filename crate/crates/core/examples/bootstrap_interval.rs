//! Percentile bootstrap interval for the value of a fixed regime.

use superopt::estimate::{bootstrap_ci, estimate_value, EstimationConfig};
use superopt::regime::RegimeKind;
use superopt::simulate::{build_example_law, draw_sample, oracle_value, true_regime, ExampleParams, SampleMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let law = build_example_law("ex3", ExampleParams::default())?;
    let g = true_regime(&law, RegimeKind::SuperoptimalLA)?;
    let ds = draw_sample(&law, 5000, 11, SampleMode::Observational)?;
    let cfg = EstimationConfig { seed: 3, ..EstimationConfig::default() };
    println!("truth {:.4}", oracle_value(&law, &g, None)?);
    println!("estimate {:.4}, 95% CI {}", estimate_value(&ds, &g, &cfg)?, bootstrap_ci(&ds, &g, &cfg)?);
    Ok(())
}
