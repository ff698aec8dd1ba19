use std::fs;
use std::process::{Command, Output};

use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_fsm-capra");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn biconjugate_row_for_a_point_file() {
    let dir = tempfile::tempdir().unwrap();
    let pts = dir.path().join("points.json");
    fs::write(&pts, "[[0, 2]]").unwrap();
    let o = run(&["eval", "biconjugate", "--norm", "l2", "--set-function", "cardinality", "--points", pts.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 1);
    assert_eq!(r[0][1], "capra_biconjugate_fsm");
    assert!((r[0][3].parse::<f64>().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn bounds_row() {
    let o = run(&["eval", "bounds", "--points", "[[1, 1]]"]);
    assert_eq!(o.status.code(), Some(0));
    let r = &rows(&stdout(&o))[0];
    let v: Vec<f64> = r[3..6].iter().map(|c| c.parse().unwrap()).collect();
    assert!((v[0] - 2.0).abs() < 1e-9);
    assert!((v[1] - 2f64.sqrt()).abs() < 1e-6);
    assert!((v[2] - 2.0).abs() < 1e-6);
}

#[test]
fn json_and_csv_outputs_record_the_operation() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("conj.json");
    let o = run(&["eval", "conjugate", "--set-function", "[0, 1, 1, 3]", "--points", "[[1, 2], [0, 0]]", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["command"], "eval");
    let recs = doc["records"].as_array().unwrap();
    assert_eq!(recs.len(), 2);
    assert!(recs.iter().all(|r| r["operation"] == "capra_conjugate_fsm"));
    assert_eq!(recs[1]["value"], 0.0);
    let csv = fs::read_to_string(dir.path().join("conj.csv")).unwrap();
    assert_eq!(rows(&csv).len(), 2);
}

#[test]
fn subdiff_uses_a_constructed_subgradient() {
    let o = run(&["eval", "subdiff", "--points", "[[3, 4]]"]);
    assert_eq!(o.status.code(), Some(0));
    let r = &rows(&stdout(&o))[0];
    assert_eq!(r[1], "subdiff_membership");
    assert_eq!(r[6], "true");
    let o = run(&["eval", "subdiff", "--points", "[[0, 0]]", "--dual", "0.5,0.5"]);
    assert_eq!(rows(&stdout(&o))[0][6], "true");
    let o = run(&["eval", "subdiff", "--points", "[[0, 0]]", "--dual", "5,5"]);
    assert_eq!(rows(&stdout(&o))[0][6], "false");
}

#[test]
fn config_errors_exit_2() {
    assert_eq!(run(&["eval", "bounds", "--points", "[]"]).status.code(), Some(2));
    assert_eq!(run(&["eval", "bounds", "--points", "[[1, 2, 3]]", "--set-function", "[0, 1, 1, 2]"]).status.code(), Some(2));
    assert_eq!(run(&["eval", "bounds", "--points", "/nonexistent/points.json"]).status.code(), Some(2));
    assert_eq!(run(&["eval", "bounds", "--norm", "euclid", "--points", "[[1, 1]]"]).status.code(), Some(2));
    assert_eq!(run(&["verify", "theorem9"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(run(&["report"]).status.code(), Some(2));
    assert_eq!(run(&["report", "/nonexistent/run.json"]).status.code(), Some(2));
}

#[test]
fn verify_writes_a_report() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("t2.json");
    let o = run(&["verify", "theorem2", "--norm", "l1.5", "--d", "3", "--trials", "5", "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let doc: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(doc["command"], "verify");
    assert_eq!(doc["suite"], "theorem2");
    assert_eq!(doc["passed"], true);
    assert!(doc["timestamp"].is_string());
    assert!(doc["claims"].as_array().unwrap().iter().all(|c| c["operation"].is_string()));
}

#[test]
fn verify_failure_exits_1_with_witness() {
    let o = run(&["verify", "theorem1", "--norm", "linf", "--d", "2", "--trials", "5"]);
    assert_eq!(o.status.code(), Some(1));
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    let failed: Vec<&Value> = doc["claims"].as_array().unwrap().iter().filter(|c| c["passed"] == false).collect();
    assert!(!failed.is_empty());
    assert!(failed.iter().all(|c| c["witness"].is_object()));
}

#[test]
fn tolerance_override_reaches_every_claim() {
    let o = run(&["verify", "subdiff", "--d", "2", "--trials", "3", "--tol", "0.5"]);
    let doc: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(doc["claims"].as_array().unwrap().iter().all(|c| c["tolerance"] == 0.5));
}

#[test]
fn report_merges_runs() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).to_str().unwrap().to_string();
    assert_eq!(run(&["verify", "subdiff", "--d", "2", "--trials", "3", "--out", &p("a.json")]).status.code(), Some(0));
    assert_eq!(run(&["verify", "bounds", "--d", "2", "--trials", "3", "--out", &p("b.json")]).status.code(), Some(0));
    assert_eq!(run(&["eval", "l0f", "--points", "[[0.3, 0.4]]", "--out", &p("c.json")]).status.code(), Some(0));
    let o = run(&["report", &p("a.json"), &p("b.json"), &p("c.json"), "--out", &p("table.txt")]);
    assert_eq!(o.status.code(), Some(0));
    let table = fs::read_to_string(p("table.txt")).unwrap();
    assert!(table.contains("subdiff") && table.contains("bounds") && table.contains("eval_l0f"));
    assert!(table.contains("6 claims, 0 failed"));
}

#[test]
fn ray_csv_has_one_row_per_step() {
    let o = run(&["report", "--ray", "(1,1)", "--scale", "0.1..2"]);
    assert_eq!(o.status.code(), Some(0));
    let r = rows(&stdout(&o));
    assert_eq!(r.len(), 20);
    assert_eq!(r[0][0], "0.1");
    assert_eq!(r[19][0], "2");
    // inside the unit ball the value scales linearly with cardinality 2
    assert!((r[0][3].parse::<f64>().unwrap() - 0.2).abs() < 1e-6);
    assert_eq!(r[19][3], "inf");
}
