//! Split, learn, value: the full estimation workflow on a synthetic ICU-style sample.

use superopt::artifact::fit;
use superopt::estimate::EstimationConfig;
use superopt::simulate::{build_example_law, draw_sample, ExampleParams, SampleMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let law = build_example_law("icu", ExampleParams::default())?;
    let ds = draw_sample(&law, 13_011, 2024, SampleMode::Observational)?;
    let artifact = fit(&ds, &EstimationConfig { seed: 7, ..EstimationConfig::default() })?;
    print!("{}", artifact.report());
    for g in &artifact.gamma {
        println!("context {}: {}", g.context, g.instruction);
    }
    Ok(())
}
