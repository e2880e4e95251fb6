//! Draw observational, two-arm and preference-trial samples and print their summaries.

use superopt::simulate::{build_example_law, draw_sample, ExampleParams, SampleMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let law = build_example_law("ex3", ExampleParams::default())?;
    for mode in [SampleMode::Observational, SampleMode::TwoArmTrial, SampleMode::PreferenceTrial] {
        let ds = draw_sample(&law, 1000, 42, mode)?;
        println!("{mode:?}: {:?}", ds.summary());
        println!("{}", ds.to_csv_string().lines().take(3).collect::<Vec<_>>().join("\n"));
    }
    Ok(())
}
