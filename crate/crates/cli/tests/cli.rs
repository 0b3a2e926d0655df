use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ssdm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssdm")).args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p
}

/// `y` in `[0, 1]`, the single stage asks for `y >= 0.5`.
const THRESHOLD: &str = r#"{
  "format_version": 1,
  "problem": {
    "kind": "finite",
    "static_set": { "a": [[1.0], [-1.0]], "d": [1.0, 0.0] },
    "lo": [0.0], "hi": [1.0], "stages": 1,
    "scenarios": [ { "stages": [ { "a": [[-1.0]], "d": [-0.5] } ] } ]
  },
  "objective": [1.0]
}"#;

/// `y1 >= 1` at stage 1 and `y1 <= -1` at stage 2.
const CONTRADICTORY: &str = r#"{
  "format_version": 1,
  "problem": {
    "kind": "finite",
    "static_set": { "a": [[1,0],[-1,0],[0,1],[0,-1]], "d": [2,2,2,2] },
    "lo": [-2, -2], "hi": [2, 2], "stages": 2,
    "scenarios": [ { "stages": [ { "a": [[-1, 0]], "d": [-1] }, { "a": [[1, 0]], "d": [-1] } ] } ]
  },
  "objective": [1, 0]
}"#;

/// Random threshold `y >= xi` with `xi` one of four values.
const RANDOM_2D: &str = r#"{
  "format_version": 1,
  "problem": {
    "kind": "finite",
    "static_set": { "a": [[1,0],[-1,0],[0,1],[0,-1]], "d": [1,1,1,1] },
    "lo": [-1, -1], "hi": [1, 1], "stages": 1,
    "scenarios": [
      { "stages": [ { "a": [[-1, 0]], "d": [0.1] } ] },
      { "stages": [ { "a": [[-1, 0]], "d": [0.0] } ] },
      { "stages": [ { "a": [[0, -1]], "d": [0.2] } ] },
      { "weight": 0.01, "stages": [ { "a": [[-1, -1]], "d": [-0.5] } ] }
    ]
  },
  "objective": [1, 1]
}"#;

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

#[test]
fn solve_feasible_toy() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "toy.json", THRESHOLD);
    let out_dir = dir.path().join("out");
    let out = ssdm(&["solve", "--instance", inst.to_str().unwrap(), "--out-dir", out_dir.to_str().unwrap(), "--rho", "0.1"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(out_dir.join("decision.json")).unwrap();
    let v: Vec<f64> = text
        .split("\"y\": [")
        .nth(1)
        .unwrap()
        .split(']')
        .next()
        .unwrap()
        .split(',')
        .map(|s| s.trim().parse().unwrap())
        .collect();
    assert_eq!(v.len(), 1);
    assert!((0.5 - 1e-8..=1.0 + 1e-8).contains(&v[0]), "{v:?}");
    let csv = fs::read_to_string(out_dir.join("iterations.csv")).unwrap();
    assert!(csv.starts_with("step,s,delta,samples,outcome,stage\n"));
    assert!(csv.trim_end().ends_with("stuck,"));
}

#[test]
fn solve_contradictory_reports_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "bad.json", CONTRADICTORY);
    let out = ssdm(&["solve", "--instance", inst.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap(), "--rho", "0.1"]);
    assert_eq!(code(&out), 2, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let delta: f64 = summary
        .split("\"delta_r\": ")
        .nth(1)
        .unwrap()
        .split([',', '\n'])
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(delta >= -1e-8, "delta_R = {delta}");
    assert!(!dir.path().join("decision.json").exists());
}

#[test]
fn solve_budget_exhaustion_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "bad.json", CONTRADICTORY);
    let out = ssdm(&[
        "solve",
        "--instance",
        inst.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--budget",
        "1",
    ]);
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn minimize_threshold_toy() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "toy.json", THRESHOLD);
    let out = ssdm(&[
        "minimize",
        "--instance",
        inst.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--kappa-opt",
        "0.1",
        "--rho",
        "0.05",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let table = fs::read_to_string(dir.path().join("bisection.csv")).unwrap();
    // width 1, kappa 0.1: smallest integer above log2(10).
    assert_eq!(table.lines().count(), 1 + 4);
    let summary = fs::read_to_string(dir.path().join("summary.json")).unwrap();
    let bound: f64 = summary
        .split("\"bound\": ")
        .nth(1)
        .unwrap()
        .split([',', '\n'])
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!((0.5..=0.6).contains(&bound), "bound {bound}");
}

#[test]
fn minimize_infeasible_everywhere() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "bad.json", CONTRADICTORY);
    let out = ssdm(&[
        "minimize",
        "--instance",
        inst.to_str().unwrap(),
        "--out-dir",
        dir.path().to_str().unwrap(),
        "--kappa-opt",
        "0.5",
    ]);
    assert_eq!(code(&out), 4, "{}", String::from_utf8_lossy(&out.stderr));
}

fn artifacts(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("csv") | Some("json")))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn fixed_seed_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "r.json", RANDOM_2D);
    let mut seen = Vec::new();
    for (k, threads) in ["1", "1", "3"].iter().enumerate() {
        let out_dir = dir.path().join(format!("run{k}"));
        let od = out_dir.to_str().unwrap();
        let common = ["--seed", "11", "--threads", threads, "--out-dir", od, "--rho", "0.05"];
        let mut args = vec!["minimize", "--instance", inst.to_str().unwrap(), "--kappa-opt", "0.05"];
        args.extend(common);
        let out = ssdm(&args);
        assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        let decision = out_dir.join("decision.json");
        let mut args = vec![
            "validate",
            "--instance",
            inst.to_str().unwrap(),
            "--decision",
            decision.to_str().unwrap(),
            "--samples",
            "300",
        ];
        args.extend(common);
        assert_eq!(code(&ssdm(&args)), 0);
        let files = artifacts(&out_dir);
        assert!(files.iter().any(|(n, _)| n == "iterations.csv"));
        assert!(files.iter().any(|(n, _)| n == "validation.csv"));
        seen.push(files);
    }
    assert_eq!(seen[0], seen[1]);
    assert_eq!(seen[0], seen[2]);
}

#[test]
fn constant_cost_instance_has_flat_statistics() {
    let dir = tempfile::tempdir().unwrap();
    // One product, one stage, deterministic demand: every scenario costs 2.
    let inst = write(
        dir.path(),
        "inv.json",
        r#"{
  "format_version": 1,
  "problem": {
    "kind": "inventory", "products": 1, "stages": 1, "z0": [0.0],
    "z_lo": [[0.0]], "z_hi": [[1.0]], "x_lo": [[0.0]], "x_hi": [[2.0]],
    "storage_weights": [1.0], "storage_capacity": 10.0, "stage_cost_cap": [10.0],
    "stage_budget_lo": [0.0], "stage_budget_hi": [10.0],
    "total_budget_lo": 0.0, "total_budget_hi": 10.0,
    "nominal": [ { "demand": [1.0], "order_cost": [2.0], "holding_cost": [0.0],
                   "backlog_cost": [0.0], "revenue": [0.0] } ],
    "ratios": [1.0, 1.0]
  }
}"#,
    );
    let dec = write(
        dir.path(),
        "dec.json",
        r#"{ "format_version": 1, "kind": "inventory", "lifted": false, "y": [0.0, 0.0, 2.0, 2.0] }"#,
    );
    let out = ssdm(&[
        "validate",
        "--instance",
        inst.to_str().unwrap(),
        "--decision",
        dec.to_str().unwrap(),
        "--samples",
        "50",
        "--out-dir",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("cost min 2.0000  mean 2.0000  median 2.0000  max 2.0000"), "{stdout}");
    assert!(stdout.contains("failures 0"));
    let stages = fs::read_to_string(dir.path().join("decision_stages.csv")).unwrap();
    assert_eq!(stages, "t,product,lower,upper,stage_budget\n1,0,0,0,2\n");
}

#[test]
fn parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    let inst = write(dir.path(), "broken.json", "{\n  \"format_version\": 1,\n  \"problem\": oops\n}");
    let out = ssdm(&["solve", "--instance", inst.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("broken.json") && err.contains("line 3"), "{err}");
    let missing = ssdm(&["solve", "--instance", dir.path().join("nope.json").to_str().unwrap()]);
    assert_eq!(code(&missing), 1);
    let version = write(dir.path(), "v.json", &THRESHOLD.replace("\"format_version\": 1", "\"format_version\": 9"));
    let out = ssdm(&["solve", "--instance", version.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("format_version 9"));
}

#[test]
fn lifted_instance_solves() {
    let dir = tempfile::tempdir().unwrap();
    // Threshold `y >= xi`, xi in {0, 1}; the rule y = xi is allowed.
    let inst = write(
        dir.path(),
        "lift.json",
        r#"{
  "format_version": 1,
  "problem": {
    "kind": "finite",
    "static_set": { "a": [[1.0], [-1.0]], "d": [2.0, 0.0] },
    "lo": [0.0], "hi": [2.0], "stages": 1,
    "scenarios": [
      { "stages": [ { "a": [[-1.0]], "d": [0.0] } ] },
      { "stages": [ { "a": [[-1.0]], "d": [-1.0] } ] }
    ]
  },
  "objective": [1.0, 0.5],
  "remodel": {
    "blocks": [0, 1],
    "basis": [ [ {"kind": "constant"} ], [ {"kind": "constant"}, {"kind": "custom_missing"} ] ],
    "chi_box": "auto"
  }
}"#,
    );
    // Unknown basis kinds are schema errors.
    let out = ssdm(&["solve", "--instance", inst.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    let fixed = fs::read_to_string(&inst)
        .unwrap()
        .replace(r#"{"kind": "custom_missing"}"#, r#"{"kind": "coordinate", "stage": 1, "index": 0}"#);
    let inst = write(dir.path(), "lift.json", &fixed);
    let out = ssdm(&["solve", "--instance", inst.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let dec = fs::read_to_string(dir.path().join("decision.json")).unwrap();
    assert!(dec.contains("\"lifted\": true"));
}
