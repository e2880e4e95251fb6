//! Interval-containment diagnostic: fires on `ex1`, silent on an exchangeable law.

use superopt::diagnose::{diagnose_population, diagnose_sample, Coarsening, IntentCoarsening};
use superopt::estimate::{EstimationConfig, Nuisances};
use superopt::simulate::{build_example_law, draw_sample, random_law, replicate_rng, ExampleParams, RandomLawSpec, SampleMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let law = build_example_law("ex1", ExampleParams::default())?;
    let coarsening = Coarsening::identity(1, IntentCoarsening::Identity);
    let population = diagnose_population(&Nuisances::from_law(&law.observed_law())?, &coarsening, 1e-9)?;
    print!("ex1 population\n{}", population.render());
    let ds = draw_sample(&law, 100_000, 1, SampleMode::Observational)?;
    let cfg = EstimationConfig { bootstrap_reps: 200, ..EstimationConfig::default() };
    print!("ex1 sample\n{}", diagnose_sample(&ds, None, &coarsening, &cfg)?.render());
    let spec = RandomLawSpec { exchangeable: true, ..RandomLawSpec::default() };
    let exch = random_law(&mut replicate_rng(5, 0), &spec);
    let c2 = Coarsening::identity(exch.n_contexts(), IntentCoarsening::Identity);
    let report = diagnose_population(&Nuisances::from_law(&exch.observed_law())?, &c2, 1e-9)?;
    println!("exchangeable law: any violation = {}", report.any_violation);
    Ok(())
}
