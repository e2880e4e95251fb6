//! Command-line front end. [`run`] parses flags, does the work and returns
//! the process exit status.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::artifact::{self, render_value_table, RegimeArtifact};
use crate::bounds::{self, Estimand, NaturalValueConvention, TrialCounts};
use crate::data::{read_csv, validate_strict, Dataset, RawTable};
use crate::diagnose::{diagnose_sample, Coarsening, IntentCoarsening};
use crate::error::Error;
use crate::estimate::EstimationConfig;
use crate::regime::{IntervalBound, Regime};
use crate::simulate::{build_example_law, draw_sample, ExampleParams, SampleMode};

/// Environment variable naming a counts CSV for `bounds` when `--input` is absent.
pub const COUNTS_ENV: &str = "SUPEROPT_VITAMIN_A_COUNTS";

#[derive(Debug, Parser)]
#[command(name = "superopt", version, about = "Superoptimal treatment regimes from instrumental-variable data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Observational,
    TwoArmTrial,
    PreferenceTrial,
}

impl From<Mode> for SampleMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Observational => SampleMode::Observational,
            Mode::TwoArmTrial => SampleMode::TwoArmTrial,
            Mode::PreferenceTrial => SampleMode::PreferenceTrial,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Draw a synthetic dataset from a built-in law.
    Simulate {
        /// ex1, ex2, ex3 or icu.
        #[arg(long, default_value = "ex3")]
        example: String,
        #[arg(long, default_value_t = 5000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Compliance scale of ex3.
        #[arg(long, default_value_t = 0.2)]
        c: f64,
        /// Add the inert covariate `w` to ex1/ex2.
        #[arg(long)]
        include_w: bool,
        #[arg(long, value_enum, default_value = "observational")]
        mode: Mode,
        /// CSV destination; standard output when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Learn regimes on a split and value them with bootstrap intervals.
    Fit {
        #[arg(long)]
        input: PathBuf,
        /// JSON estimation config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Artifact destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Value the regimes of an artifact on new data.
    Value {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        artifact: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sharp bounds from two-arm trial counts (columns y,a,z,count).
    Bounds {
        #[arg(long)]
        input: Option<PathBuf>,
        /// ate, att0 or att1.
        #[arg(long, default_value = "ate")]
        estimand: Estimand,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Interval-containment check for unmeasured confounding.
    Diagnose {
        #[arg(long)]
        input: PathBuf,
        /// Use this artifact's superoptimal regime instead of learning one.
        #[arg(long)]
        artifact: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// JSON report destination.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve recommendations from an artifact over HTTP.
    Serve {
        /// Artifact JSON.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 8080)]
        port: u16,
    },
}

fn load_config(path: Option<&Path>, base: EstimationConfig, seed: Option<u64>) -> Result<EstimationConfig, Error> {
    let mut cfg = match path {
        Some(p) => serde_json::from_str(&std::fs::read_to_string(p)?).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?,
        None => base,
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Error> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

fn read_against(path: &Path, artifact: &RegimeArtifact) -> Result<Dataset, Error> {
    Ok(validate_strict(&RawTable::from_path(path)?, &artifact.schema)?)
}

fn load_counts(input: Option<&Path>) -> Result<TrialCounts, Error> {
    let from_env = std::env::var_os(COUNTS_ENV).map(PathBuf::from);
    Ok(match input.map(Path::to_path_buf).or(from_env) {
        Some(p) => TrialCounts::from_path(p)?,
        None => bounds::vitamin_a_counts(),
    })
}

fn estimand_name(e: Estimand) -> &'static str {
    match e {
        Estimand::Ate => "ate",
        Estimand::Att(0) => "att0",
        Estimand::Att(_) => "att1",
    }
}

#[derive(Serialize)]
struct BoundsOutput {
    estimand: &'static str,
    lower: f64,
    upper: f64,
}

/// Two-line interval output for one estimand.
pub fn render_bounds(estimand: Estimand, b: IntervalBound) -> String {
    format!("{:<10} {:>9} {:>9}\n{:<10} {:>9.4} {:>9.4}\n", "estimand", "lower", "upper", estimand_name(estimand), b.lo, b.hi)
}

pub fn compute_bounds(counts: &TrialCounts, estimand: Estimand) -> Result<IntervalBound, Error> {
    Ok(match estimand {
        Estimand::Ate => bounds::balke_pearl_ate_bounds(counts)?,
        Estimand::Att(a) => bounds::natural_att_bounds(counts, a, NaturalValueConvention::Pooled)?,
    })
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<(), Error> {
    match cmd {
        Command::Simulate { example, n, seed, c, include_w, mode, out: dest } => {
            let law = build_example_law(&example, ExampleParams { c, include_w })?;
            let ds = draw_sample(&law, n, seed, mode.into())?;
            match dest {
                Some(p) => ds.write_csv(std::fs::File::create(p)?)?,
                None => ds.write_csv(&mut *out)?,
            }
        }
        Command::Fit { input, config, seed, out: dest } => {
            let cfg = load_config(config.as_deref(), EstimationConfig::default(), seed)?;
            let ds = read_csv(&input)?;
            let art = artifact::fit(&ds, &cfg)?;
            if let Some(p) = &dest {
                art.save(p)?;
            }
            write!(out, "{}", art.report())?;
            let stuck: Vec<String> = art.nuisance_summaries.iter().filter(|s| !s.converged).map(|s| s.model.clone()).collect();
            if !stuck.is_empty() {
                return Err(Error::NonConvergence(stuck));
            }
        }
        Command::Value { input, artifact: art_path, config, seed, out: dest } => {
            let art = RegimeArtifact::load(&art_path)?;
            let cfg = load_config(config.as_deref(), art.config, seed)?;
            let ds = read_against(&input, &art)?;
            let observed = Regime::observed(art.schema.context_space());
            let regimes = [&observed, &art.optimal, &art.superoptimal, &art.instrument_superoptimal];
            let (values, _) = artifact::value_table(&ds, &regimes, &cfg)?;
            write!(out, "{}", render_value_table(&values))?;
            if let Some(p) = &dest {
                write_json(p, &values)?;
            }
        }
        Command::Bounds { input, estimand, out: dest } => {
            let counts = load_counts(input.as_deref())?;
            let b = compute_bounds(&counts, estimand)?;
            write!(out, "{}", render_bounds(estimand, b))?;
            if let Some(p) = &dest {
                write_json(p, &BoundsOutput { estimand: estimand_name(estimand), lower: b.lo, upper: b.hi })?;
            }
        }
        Command::Diagnose { input, artifact: art_path, config, seed, out: dest } => {
            let (ds, art, base) = match &art_path {
                Some(p) => {
                    let art = RegimeArtifact::load(p)?;
                    (read_against(&input, &art)?, Some(art.clone()), art.config)
                }
                None => (read_csv(&input)?, None, EstimationConfig::default()),
            };
            let cfg = load_config(config.as_deref(), base, seed)?;
            let coarsening = Coarsening::identity(ds.schema().context_space().len(), IntentCoarsening::Identity);
            let report = diagnose_sample(&ds, art.as_ref().map(|a| &a.superoptimal), &coarsening, &cfg)?;
            write!(out, "{}", report.render())?;
            if let Some(p) = &dest {
                write_json(p, &report)?;
            }
        }
        Command::Serve { input, port } => {
            let art = RegimeArtifact::load(&input)?;
            crate::serve::serve(art, port)?;
        }
    }
    Ok(())
}

/// Runs the CLI on `argv` (program name first), writing results to `out`
/// and diagnostics to standard error.
pub fn run_with<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { crate::error::EXIT_VALIDATION } else { 0 };
        }
    };
    match execute(cli.command, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

/// Runs the CLI writing results to standard output.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    run_with(argv, &mut lock)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_capture(args: &[&str]) -> (i32, String) {
        let mut buf = Vec::new();
        let code = run_with(std::iter::once("superopt").chain(args.iter().copied()), &mut buf);
        (code, String::from_utf8(buf).unwrap())
    }

    #[test]
    fn bounds_on_bundled_counts() {
        let (code, text) = run_capture(&["bounds", "--estimand", "ate"]);
        assert_eq!(code, 0);
        assert_eq!(text.lines().count(), 2);
        assert!(text.contains("-0.1946") && text.contains("0.0054"), "{text}");
    }

    #[test]
    fn flag_errors_exit_one() {
        assert_eq!(run_capture(&["bounds", "--estimand", "nope"]).0, 1);
        assert_eq!(run_capture(&["fit"]).0, 1);
        assert_eq!(run_capture(&["simulate", "--example", "ex9", "--n", "10"]).0, 1);
    }

    #[test]
    fn simulate_writes_csv() {
        let (code, text) = run_capture(&["simulate", "--example", "ex3", "--n", "20", "--seed", "4"]);
        assert_eq!(code, 0);
        assert_eq!(text.lines().count(), 21);
        assert_eq!(text.lines().next(), Some("z,a,y"));
    }
}
