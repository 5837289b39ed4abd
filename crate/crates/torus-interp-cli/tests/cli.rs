use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use torus_interp_cli::scenario::PIPELINES;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn scenario(name: &str) -> PathBuf {
    repo().join("scenarios").join(name)
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_torus-interp"));
    c.env_remove("TORUS_INTERP_CONFIG");
    c
}

fn run(args: &[&str]) -> (Output, Value) {
    let out = bin().arg("run").args(args).output().unwrap();
    let report = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (out, report)
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn write_temp(dir: &tempfile::TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn theta_check_at_i_passes() {
    let (o, r) = run(&[scenario("theta-check.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(r["status"], "pass");
    let q = r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["name"] == "quasi-periodicity")
        .unwrap();
    assert!(q["value"].as_f64().unwrap() < 1e-10);
    assert!(r["timings"]["total_ms"].as_f64().is_some());
}

#[test]
fn genus0_seed_42() {
    let (o, r) = run(&[scenario("genus0.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(r["seed"], 42);
    assert!(r["details"]["max_deviation"].as_f64().unwrap() < 1e-9);
    assert_eq!(r["details"]["lambdas"].as_array().unwrap().len(), 3);
}

#[test]
fn non_abel_first_problem_is_a_verdict() {
    let (o, r) = run(&[scenario("solve-first-non-abel.json").to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    assert_eq!(r["verdict"], "no-solution");
    assert_eq!(r["details"]["reason"]["reason"], "side_constraint");
    assert!(r["details"]["reason"]["relative"].as_f64().unwrap() > 1e-3);
    assert!(r["details"]["reason"]["absolute"].as_f64().unwrap() > 0.0);
}

#[test]
fn shipped_scenarios_run_with_expected_codes() {
    let mut seen = Vec::new();
    for entry in fs::read_dir(repo().join("scenarios")).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_str().unwrap().to_string();
        let (o, r) = run(&[path.to_str().unwrap(), "--no-timings"]);
        let expected = if name.contains("indeterminate") { 3 } else { 0 };
        assert_eq!(code(&o), expected, "{name}: {r}");
        seen.push(r["pipeline"].as_str().unwrap().to_string());
    }
    for p in PIPELINES {
        assert!(seen.iter().any(|s| s == p), "no shipped scenario for {p}");
    }
}

#[test]
fn reports_and_samples_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for k in 0..2 {
        let out = dir.path().join(format!("r{k}.json"));
        let csv = dir.path().join(format!("s{k}.csv"));
        let o = bin()
            .args([
                "run",
                scenario("solve-first-abel.json").to_str().unwrap(),
                "--no-timings",
                "--out",
            ])
            .arg(&out)
            .arg("--samples")
            .arg(&csv)
            .output()
            .unwrap();
        assert_eq!(code(&o), 0);
        outputs.push((fs::read(&out).unwrap(), fs::read(&csv).unwrap()));
    }
    assert_eq!(outputs[0], outputs[1]);
    let (_, r) = run(&[
        scenario("solve-first-abel.json").to_str().unwrap(),
        "--no-timings",
        "--seed",
        "6",
    ]);
    let (_, r0) = run(&[
        scenario("solve-first-abel.json").to_str().unwrap(),
        "--no-timings",
    ]);
    assert_eq!(r["seed"], 6);
    assert_ne!(
        r["details"]["certificate"]["periodicity"],
        r0["details"]["certificate"]["periodicity"]
    );
}

#[test]
fn scalar_trivialization_samples_full_grid() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("f.csv");
    let (o, r) = run(&[
        scenario("trivialize-scalar.json").to_str().unwrap(),
        "--samples",
        csv.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    assert_eq!(r["samples"]["rows"], 2500);
    assert_eq!(r["samples"]["omitted"], 0);
    let mut rd = csv::Reader::from_path(&csv).unwrap();
    assert_eq!(
        rd.headers().unwrap().iter().collect::<Vec<_>>(),
        ["re_u", "im_u", "re_f_0_0", "im_f_0_0"]
    );
    assert_eq!(rd.records().count(), 2500);
}

#[test]
fn grid_through_a_pole_drops_rows() {
    let dir = tempfile::tempdir().unwrap();
    // a 51 x 51 grid has a node exactly at (1 + tau)/2
    let s = write_temp(
        &dir,
        "s.json",
        r#"{"pipeline": "trivialize", "inputs": {"construction": "scalar", "alpha": [2, 0]},
            "samples": {"grid": [51, 51], "margin": 0.05}}"#,
    );
    let csv = dir.path().join("f.csv");
    let (o, r) = run(&[&s, "--samples", csv.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let omitted = r["samples"]["omitted"].as_u64().unwrap();
    assert!(omitted > 0);
    assert_eq!(r["samples"]["rows"].as_u64().unwrap() + omitted, 51 * 51);
}

#[test]
fn unknown_selector_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let s = write_temp(
        &dir,
        "s.json",
        r#"{"pipeline": "trivialize", "inputs": {"construction": "scalar", "alpha": [2, 0]},
            "samples": {"function": "nope"}}"#,
    );
    let (o, r) = run(&[&s, "--samples", dir.path().join("x.csv").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert_eq!(r["status"], "input-error");
    assert!(!dir.path().join("x.csv").exists());
}

#[test]
fn schema_violations_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for (i, text) in [
        "not json",
        r#"{"pipeline": "bogus"}"#,
        r#"{"pipeline": "genus0", "inputs": {"n": 3, "extra": true}}"#,
        r#"{"pipeline": "genus0", "tolerances": {"made_up": 1}}"#,
        r#"{"pipeline": "theta-check", "tau": [0, -1]}"#,
        r#"{"pipeline": "gamma", "inputs": {"divisor": {"rank": 1, "entries": []}}}"#,
    ]
    .iter()
    .enumerate()
    {
        let s = write_temp(&dir, &format!("s{i}.json"), text);
        let (o, r) = run(&[&s]);
        assert_eq!(code(&o), 2, "{text}");
        assert!(r["error"].as_str().is_some());
        assert!(!o.stderr.is_empty());
    }
    let o = bin()
        .args(["run", "/definitely/missing.json"])
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
}

#[test]
fn grey_zone_exits_3_with_report() {
    let (o, r) = run(&[scenario("gamma-indeterminate.json").to_str().unwrap()]);
    assert_eq!(code(&o), 3);
    assert_eq!(r["status"], "numerical-error");
    assert_eq!(r["verdict"], "indeterminate");
    assert!(r["details"]["system"]["gamma"].is_array());
}

#[test]
fn tol_flag_rebounds_checks() {
    let (o, r) = run(&[
        scenario("theta-check.json").to_str().unwrap(),
        "--tol",
        "1e-30",
    ]);
    assert_eq!(code(&o), 1);
    assert_eq!(r["status"], "fail");
    assert!(r["checks"]
        .as_array()
        .unwrap()
        .iter()
        .all(|c| (c["bound"].as_f64().unwrap() / 1e-30 - 1.0).abs() < 1e-12));
}

#[test]
fn config_file_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_temp(
        &dir,
        "cfg.json",
        r#"{"side_relative": 1e-2, "contour_nodes": 256}"#,
    );
    let out = bin()
        .args(["run", scenario("genus0.json").to_str().unwrap()])
        .env("TORUS_INTERP_CONFIG", &cfg)
        .output()
        .unwrap();
    let r: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(r["tolerances"]["side_relative"], 1e-2);
    assert_eq!(r["tolerances"]["contour_nodes"], 256);
    let bad = write_temp(&dir, "bad.json", "[1, 2]");
    let out = bin()
        .args(["run", scenario("genus0.json").to_str().unwrap()])
        .env("TORUS_INTERP_CONFIG", &bad)
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn schema_file_lists_every_pipeline() {
    let schema: Value = serde_json::from_str(
        &fs::read_to_string(repo().join("schema/scenario.schema.json")).unwrap(),
    )
    .unwrap();
    let names: Vec<&str> = schema["properties"]["pipeline"]["enum"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_str().unwrap())
        .collect();
    assert_eq!(names, PIPELINES);
    let tol: Value = serde_json::to_value(torus_interp::Tolerances::default()).unwrap();
    let mut keys: Vec<&String> = tol.as_object().unwrap().keys().collect();
    let mut listed: Vec<&String> = schema["properties"]["tolerances"]["properties"]
        .as_object()
        .unwrap()
        .keys()
        .collect();
    keys.sort();
    listed.sort();
    assert_eq!(keys, listed);
}
