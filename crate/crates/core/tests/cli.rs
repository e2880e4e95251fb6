//! The `superopt` binary end to end: exit codes, files and report shapes.

use std::path::Path;
use std::process::{Command, Output};

use superopt::artifact::RegimeArtifact;
use superopt::bounds::vitamin_a_counts;

fn superopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_superopt")).args(args).env_remove("SUPEROPT_VITAMIN_A_COUNTS").output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn simulate(dir: &Path, example: &str, n: usize, seed: u64) -> std::path::PathBuf {
    let path = dir.join(format!("{example}_{n}_{seed}.csv"));
    let o = superopt(&["simulate", "--example", example, "--n", &n.to_string(), "--seed", &seed.to_string(), "--out", s(&path)]);
    assert!(o.status.success(), "{}", stderr(&o));
    path
}

#[test]
fn fit_is_deterministic_and_reports_four_rows() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), "ex3", 4000, 1);
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"bootstrap_reps": 200}"#).unwrap();
    let (a1, a2) = (dir.path().join("a1.json"), dir.path().join("a2.json"));
    let o1 = superopt(&["fit", "--input", s(&csv), "--config", s(&cfg), "--seed", "5", "--out", s(&a1)]);
    let o2 = superopt(&["fit", "--input", s(&csv), "--config", s(&cfg), "--seed", "5", "--out", s(&a2)]);
    assert_eq!(o1.status.code(), Some(0), "{}", stderr(&o1));
    assert_eq!(std::fs::read(&a1).unwrap(), std::fs::read(&a2).unwrap());
    assert_eq!(stdout(&o1), stdout(&o2));
    let report = stdout(&o1);
    assert!(report.starts_with("Marginal value functions under different regimes"));
    let rows: Vec<&str> = report.lines().filter(|l| l.starts_with("E(Y")).collect();
    assert_eq!(rows.len(), 4, "{report}");
    for (row, label) in rows.iter().zip(["E(Y) ", "E(Y^g_opt)", "E(Y^g_sup)", "E(Y^g_z-sup)"]) {
        assert!(row.starts_with(label));
    }
    let art = RegimeArtifact::load(&a1).unwrap();
    assert_eq!(art.config.seed, 5);
    assert_eq!(art.config.bootstrap_reps, 200);
}

#[test]
fn value_rejects_schema_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let icu = simulate(dir.path(), "icu", 3000, 2);
    let art = dir.path().join("icu.json");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"bootstrap_reps": 100}"#).unwrap();
    assert!(superopt(&["fit", "--input", s(&icu), "--config", s(&cfg), "--out", s(&art)]).status.success());
    let ex3 = simulate(dir.path(), "ex3", 500, 3);
    let o = superopt(&["value", "--input", s(&ex3), "--artifact", s(&art)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("sepsis"), "{}", stderr(&o));
    let extra = dir.path().join("extra.csv");
    let text = std::fs::read_to_string(&icu).unwrap();
    let widened: Vec<String> = text.lines().enumerate().map(|(i, l)| if i == 0 { format!("{l},ward") } else { format!("{l},3") }).collect();
    std::fs::write(&extra, widened.join("\n")).unwrap();
    let o = superopt(&["value", "--input", s(&extra), "--artifact", s(&art)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ward"));
    let ok = superopt(&["value", "--input", s(&icu), "--artifact", s(&art), "--seed", "2"]);
    assert_eq!(ok.status.code(), Some(0), "{}", stderr(&ok));
    assert_eq!(stdout(&ok).lines().filter(|l| l.starts_with("E(Y")).count(), 4);
}

#[test]
fn bounds_reads_counts_file_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let counts = dir.path().join("counts.csv");
    std::fs::write(&counts, vitamin_a_counts().to_csv_string()).unwrap();
    let run = |estimand: &str| {
        let o = Command::new(env!("CARGO_BIN_EXE_superopt")).args(["bounds", "--estimand", estimand]).env("SUPEROPT_VITAMIN_A_COUNTS", &counts).output().unwrap();
        assert!(o.status.success());
        stdout(&o)
    };
    let ate = run("ate");
    assert_eq!(ate.lines().count(), 2);
    assert!(ate.contains("-0.1946") && ate.contains("0.0054"));
    assert!(run("att1").contains("0.0032"));
    assert!(run("att0").contains("0.0069"));
    let json = dir.path().join("b.json");
    assert!(superopt(&["bounds", "--input", s(&counts), "--out", s(&json)]).status.success());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert!((v["lower"].as_f64().unwrap() + 0.1946).abs() < 5e-4);
    std::fs::write(&counts, "y,a,z,count\n1,1,7,3\n").unwrap();
    assert_eq!(superopt(&["bounds", "--input", s(&counts)]).status.code(), Some(1));
}

#[test]
fn validation_and_numerical_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), "icu", 3000, 4);
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"split_fraction": 0}"#).unwrap();
    assert_eq!(superopt(&["fit", "--input", s(&csv), "--config", s(&bad)]).status.code(), Some(1));
    std::fs::write(&bad, r#"{"sed": 1}"#).unwrap();
    assert_eq!(superopt(&["fit", "--input", s(&csv), "--config", s(&bad)]).status.code(), Some(1));
    assert_eq!(superopt(&["fit", "--input", s(&dir.path().join("missing.csv"))]).status.code(), Some(1));
    assert_eq!(superopt(&["fit", "--input", s(&csv), "--bogus"]).status.code(), Some(1));
    let no_z = dir.path().join("noz.csv");
    let text = std::fs::read_to_string(&csv).unwrap();
    let stripped: Vec<String> = text.lines().map(|l| l.split_once(',').unwrap().1.to_string()).collect();
    std::fs::write(&no_z, stripped.join("\n")).unwrap();
    let o = superopt(&["fit", "--input", s(&no_z)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("instrument"));
    let stiff = dir.path().join("stiff.json");
    std::fs::write(&stiff, r#"{"design": "main_effects", "irls_max_iter": 1, "bootstrap_reps": 50}"#).unwrap();
    let o = superopt(&["fit", "--input", s(&csv), "--config", s(&stiff)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("converge"));
}

#[test]
fn diagnose_writes_json_report() {
    let dir = tempfile::tempdir().unwrap();
    let csv = simulate(dir.path(), "ex1", 20_000, 6);
    let out = dir.path().join("diag.json");
    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, r#"{"bootstrap_reps": 100}"#).unwrap();
    let o = superopt(&["diagnose", "--input", s(&csv), "--config", s(&cfg), "--out", s(&out)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(report["any_violation"], true);
    assert!(stdout(&o).contains("violated"));
}
