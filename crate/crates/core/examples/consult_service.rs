//! Fit an artifact and answer consultations with the same lookups the HTTP service uses.
//! Pass `--listen PORT` to serve it instead.

use superopt::artifact::fit;
use superopt::estimate::EstimationConfig;
use superopt::serve::{recommend, serve, RecommendRequest};
use superopt::simulate::{build_example_law, draw_sample, ExampleParams, SampleMode};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let law = build_example_law("ex3", ExampleParams::default())?;
    let ds = draw_sample(&law, 20_000, 9, SampleMode::Observational)?;
    let artifact = fit(&ds, &EstimationConfig { bootstrap_reps: 200, ..EstimationConfig::default() })?;
    let args: Vec<String> = std::env::args().collect();
    if let Some(port) = args.iter().position(|a| a == "--listen").and_then(|i| args.get(i + 1)) {
        serve(artifact, port.parse()?)?;
        return Ok(());
    }
    for body in [r#"{"covariates": {}}"#, r#"{"covariates": {"z": 1}, "intent": 1}"#, r#"{"covariates": {}, "instrument": 0, "intent": 0}"#] {
        let req: RecommendRequest = serde_json::from_str(body)?;
        let resp = recommend(&artifact, &req)?;
        println!("{body}\n  -> g_sup {:?}, g_zsup {:?}, {}", resp.g_sup_by_intent, resp.g_zsup_by_intent, resp.instruction);
    }
    Ok(())
}
