use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use specvar::report::ReportDocument;

const LAMBDA1: &str = r#"{"name":"order_stat","i":1}"#;
const MCP21: &str = r#"{"name":"mcp","a":2,"c":1}"#;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_specvar"));
    c.env_remove("SPECVAR_SEED");
    c
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

fn flagship(dir: &Path) -> (PathBuf, PathBuf) {
    let x = write(dir, "x.json", r#"{"n":2,"entries":[2,0,0,1]}"#);
    let h = write(dir, "h.csv", "0,1\n1,0\n");
    (x, h)
}

#[test]
fn ssub_flagship() {
    let dir = tempfile::tempdir().unwrap();
    let (x, h) = flagship(dir.path());
    let trace = dir.path().join("trace.csv");
    let out = run(&[
        "--command", "SSUB",
        "--matrix", x.to_str().unwrap(),
        "--theta", LAMBDA1,
        "--direction", h.to_str().unwrap(),
        "--subgradient", "1,0",
        "--trace-csv", trace.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let doc = json(&out);
    let r = &doc["output"]["report"];
    assert_eq!(r["d2"].as_f64(), Some(2.0));
    assert_eq!(r["in_critical_cone"].as_bool(), Some(true));
    assert!(r["oracle_gap"].as_f64().unwrap() <= 1e-2);

    let text = fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("t,min_quotient,at_w_quotient"));
    let last: Vec<f64> = lines.last().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert!((last[1] - 2.0).abs() < 1e-2);
}

#[test]
fn prox_and_subderiv() {
    let dir = tempfile::tempdir().unwrap();
    let x = write(dir.path(), "x.csv", "3,0,0\n0,0.8,0\n0,0,0.4\n");
    let out = run(&["--command", "prox", "--matrix", x.to_str().unwrap(), "--theta", MCP21, "--gamma", "0.5"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    let eigs: Vec<f64> = doc["output"]["prox"]["eigenvalues"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_f64().unwrap())
        .collect();
    for (a, b) in eigs.iter().zip([3.0, 0.4, 0.0]) {
        assert!((a - b).abs() < 1e-12);
    }

    let (x, h) = flagship(dir.path());
    let out = run(&[
        "--command", "SUBDERIV",
        "--matrix", x.to_str().unwrap(),
        "--theta", LAMBDA1,
        "--direction", h.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["output"]["dg"].as_f64(), Some(0.0));
    assert!(doc["output"]["oracle_gap"].as_f64().unwrap() < 1e-4);
}

#[test]
fn nested_rows_match_flat_entries() {
    let dir = tempfile::tempdir().unwrap();
    let flat = write(dir.path(), "a.json", r#"{"n":2,"entries":[2,0,0,1]}"#);
    let rows = write(dir.path(), "b.json", r#"{"n":2,"entries":[[2,0],[0,1]]}"#);
    let a = json(&run(&["--command", "REPORT", "--matrix", flat.to_str().unwrap(), "--theta", LAMBDA1]));
    let b = json(&run(&["--command", "REPORT", "--matrix", rows.to_str().unwrap(), "--theta", LAMBDA1]));
    assert_eq!(a["inputs"], b["inputs"]);
    assert_eq!(a["output"], b["output"]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (x, h) = flagship(dir.path());
    let x = x.to_str().unwrap();

    assert_eq!(run(&["--command", "bogus"]).status.code(), Some(2));
    assert_eq!(run(&["--command", "SSUB", "--matrix", x, "--theta", r#"{"name":"nope"}"#]).status.code(), Some(2));
    // y = (0,1) is not a subgradient of λ₁ at diag(2,1)
    let out = run(&[
        "--command", "SSUB", "--matrix", x, "--theta", LAMBDA1,
        "--direction", h.to_str().unwrap(), "--subgradient", "0,1",
    ]);
    assert_eq!(out.status.code(), Some(2));

    let missing = dir.path().join("missing.json");
    assert_eq!(run(&["--command", "REPORT", "--matrix", missing.to_str().unwrap(), "--theta", LAMBDA1]).status.code(), Some(4));

    let z = write(dir.path(), "z.json", r#"{"n":2,"entries":[2,0,0,0]}"#);
    let out = run(&[
        "--command", "SEMIDERIV", "--matrix", z.to_str().unwrap(), "--theta", MCP21,
        "--direction", h.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported point"));
}

#[test]
fn asymmetric_input_warns() {
    let dir = tempfile::tempdir().unwrap();
    let x = write(dir.path(), "x.csv", "2,0.1\n0,1\n");
    let out = run(&["--command", "REPORT", "--matrix", x.to_str().unwrap(), "--theta", LAMBDA1]);
    assert_eq!(out.status.code(), Some(0));
    assert!(!json(&out)["warnings"].as_array().unwrap().is_empty());
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

#[test]
fn out_file_round_trips_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let x = write(dir.path(), "x.json", r#"{"n":3,"entries":[1.1,0.3,-0.7,0.3,0.1,0.2,-0.7,0.2,-2.3]}"#);
    let h = write(dir.path(), "h.json", r#"{"n":3,"entries":[0.5,-1,0.25,-1,0,0.125,0.25,0.125,2]}"#);
    let mut docs = Vec::new();
    for name in ["a.json", "b.json"] {
        let out = dir.path().join(name);
        let o = run(&[
            "--command", "REPORT",
            "--matrix", x.to_str().unwrap(),
            "--theta", r#"{"name":"smooth_sep","coeffs":[1,1,1]}"#,
            "--direction", h.to_str().unwrap(),
            "--seed", "7",
            "--out", out.to_str().unwrap(),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
        assert!(o.stdout.is_empty());
        let doc: ReportDocument = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
        docs.push(doc);
    }
    let m = docs[0].inputs.matrix.as_ref().unwrap();
    assert_eq!(m.entries, vec![1.1, 0.3, -0.7, 0.3, 0.1, 0.2, -0.7, 0.2, -2.3]);
    assert_eq!(docs[0].seed, 7);
    assert_eq!(docs[0].deterministic_json(), docs[1].deterministic_json());
}

#[test]
fn seed_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (x, h) = flagship(dir.path());
    let out = bin()
        .args(["--command", "SSUB", "--matrix", x.to_str().unwrap(), "--theta", LAMBDA1])
        .args(["--direction", h.to_str().unwrap()])
        .env("SPECVAR_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(json(&out)["seed"].as_u64(), Some(9));
}

#[test]
fn verify_small_scale() {
    let out = run(&["--command", "VERIFY", "--verify-scale", "0.1"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.lines().filter(|l| l.starts_with("[PASS]")).count() >= 11);
    assert!(!stderr.contains("[FAIL]"));
}
