use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bounded_effects::bounds::Estimator;
use bounded_effects::dataset::load_csv;
use bounded_effects::{Direction, Schema};
use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_bounded-effects"));
    cmd.env("BOUNDED_EFFECTS_THREADS", "2");
    cmd
}

fn config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn generated_panel(dir: &Path) -> PathBuf {
    let path = dir.join("panel.csv");
    let out = run(&[
        "generate",
        "--config",
        config("two_sources.toml").to_str().unwrap(),
        "--out",
        path.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    path
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn did_output_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let panel = generated_panel(dir.path());
    let doc = json(&run(&[
        "estimate", "--input", panel.to_str().unwrap(), "--method", "did",
        "--monotonicity", "negative,positive", "--bootstrap", "0",
    ]));
    let ds = load_csv(&panel, &Schema::default())
        .unwrap()
        .with_directions(vec![Direction::Negative, Direction::Positive])
        .unwrap();
    let r = Estimator::Did.run(&ds).unwrap();
    assert_eq!(doc["bounds"]["lb"].as_f64().unwrap().to_bits(), r.lb.to_bits());
    assert_eq!(doc["bounds"]["ub"].as_f64().unwrap().to_bits(), r.ub.to_bits());
    assert_eq!(doc["pi1"].as_f64().unwrap(), r.proportions.pi1);
    assert!(doc["ci"].is_null());
}

#[test]
fn cic_table_has_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let panel = generated_panel(dir.path());
    let doc = json(&run(&[
        "estimate", "--input", panel.to_str().unwrap(), "--method", "cic",
        "--monotonicity", "negative,positive", "--bootstrap", "30",
    ]));
    let rows = doc["qtt_table"].as_array().unwrap();
    assert_eq!(rows.len(), 99);
    let qs: Vec<f64> = rows.iter().map(|r| r["q"].as_f64().unwrap()).collect();
    assert!(qs.windows(2).all(|w| w[0] < w[1]));
    for r in rows {
        let (lo, lb, ub, hi) = (r["ci_lo"].as_f64().unwrap(), r["lb"].as_f64().unwrap(), r["ub"].as_f64().unwrap(), r["ci_hi"].as_f64().unwrap());
        assert!(lo <= lb && lb <= ub && ub <= hi);
    }

    let out = run(&[
        "estimate", "--input", panel.to_str().unwrap(), "--method", "cic",
        "--monotonicity", "negative,positive", "--bootstrap", "0", "--grid", "9", "--format", "csv",
    ]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("q,lb,ub,ci_lo,ci_hi"));
    assert_eq!(text.lines().count(), 10);
}

#[test]
fn usage_and_data_errors_exit_with_documented_codes() {
    let dir = tempfile::tempdir().unwrap();
    let panel = generated_panel(dir.path());
    let p = panel.to_str().unwrap();
    let code = |args: &[&str]| run(args).status.code();

    assert_eq!(code(&["estimate", "--input", p, "--method", "did"]), Some(2));
    assert_eq!(code(&["estimate", "--input", p, "--method", "did", "--monotonicity", "positive"]), Some(2));
    assert_eq!(code(&["estimate", "--input", p, "--method", "did", "--monotonicity", "negative,positive", "--grid", "9"]), Some(2));
    assert_eq!(code(&["estimate", "--input", p, "--method", "did", "--monotonicity", "negative,positive", "--alpha", "1.5"]), Some(2));
    assert_eq!(code(&["estimate", "--input", "/nonexistent/panel.csv", "--method", "naive"]), Some(1));
    let cfg = config("always_observed.toml");
    assert_eq!(code(&["simulate", "--config", cfg.to_str().unwrap(), "--reps", "0"]), Some(2));
}

#[test]
fn validate_lists_violations() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "id,g,y1,y2,s1,s2\na,1,0.5,1.0,1,1\nb,0,,2.0,0,1\nc,0,0.1,0.3,1,1\n").unwrap();
    let out = run(&["validate", "--input", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let listing = String::from_utf8(out.stdout).unwrap();
    assert!(listing.contains("id b") && listing.contains("absorbing-state"), "{listing}");

    let good = generated_panel(dir.path());
    let out = run(&["validate", "--input", good.to_str().unwrap()]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
}

#[test]
fn simulate_reports_coverage_deterministically() {
    let cfg = config("always_observed.toml");
    let args = ["simulate", "--config", cfg.to_str().unwrap(), "--reps", "100", "--bootstrap", "10"];
    let a = run(&args);
    let b = run(&args);
    assert_eq!(a.stdout, b.stdout);
    let doc = json(&a);
    assert_eq!(doc["reps"], 100);
    assert!(doc["bounds_coverage"].as_f64().unwrap() >= 0.99);
    assert!(doc["config"]["study"].is_object());
}
