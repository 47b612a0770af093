use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rasp-attn"));
    cmd.env_remove("RASP_ATTN_SEED");
    cmd
}

fn listing(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/listings")
        .join(format!("{name}.rasp"))
}

fn scratch(name: &str, contents: &str) -> PathBuf {
    let path = PathBuf::from(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::write(&path, contents).unwrap();
    path
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap()
}

#[test]
fn run_maxmin_sorts_pairs() {
    let input = scratch("maxmin_in.json", "[1,2,4,3]");
    let out = bin()
        .arg("run")
        .arg(listing("maxmin"))
        .arg(&input)
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_eq!(stdout(&out).trim(), "[2,1,4,3]");
}

#[test]
fn run_relu() {
    let input = scratch("relu_in.json", "[-1,0,2]");
    let out = bin()
        .arg("run")
        .arg(listing("relu"))
        .arg(&input)
        .output()
        .unwrap();
    assert_eq!(stdout(&out).trim(), "[0,0,2]");
}

#[test]
fn run_flattens_matrix_input() {
    let input = scratch(
        "t_in.json",
        r#"{"rows":3,"cols":4,"data":[1,2,3,4,5,6,7,8,9,10,11,12]}"#,
    );
    let out = bin()
        .arg("run")
        .arg(listing("transpose"))
        .arg(&input)
        .output()
        .unwrap();
    assert_eq!(stdout(&out).trim(), "[1,5,9,2,6,10,3,7,11,4,8,12]");
}

#[test]
fn missing_binding_names_parameter() {
    let program = scratch("bound.rasp", "def f(r) { return tokens * r; }");
    let input = scratch("bound_in.json", "[1,2]");
    let out = bin().arg("run").arg(&program).arg(&input).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("`r`"), "{err}");

    let out = bin()
        .arg("run")
        .arg(&program)
        .arg(&input)
        .args(["--bind", "r=3"])
        .output()
        .unwrap();
    assert_eq!(stdout(&out).trim(), "[3,6]");
}

#[test]
fn parse_error_exits_two() {
    let program = scratch("broken.rasp", "def f() { return select(; }");
    let input = scratch("broken_in.json", "[1]");
    let out = bin().arg("run").arg(&program).arg(&input).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn unknown_command_exits_two() {
    assert_eq!(
        bin().arg("frobnicate").output().unwrap().status.code(),
        Some(2)
    );
}

#[test]
fn simulate_identity_query() {
    // A = 0 makes every score zero, so each output row is the column mean of XV.
    let spec = scratch("spec0.json", r#"{"A":[[0,0],[0,0]],"V":[[1,2],[3,4]]}"#);
    let x = scratch("x0.json", "[[1,0],[0,1]]");
    let out = bin().arg("simulate").arg(&spec).arg(&x).output().unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let m = json(&out);
    assert_eq!(m["rows"], 2);
    let data: Vec<f64> = serde_json::from_value(m["data"].clone()).unwrap();
    assert_eq!(data, vec![2.0, 3.0, 2.0, 3.0]);
}

#[test]
fn simulate_in_host_masks_by_default() {
    let spec = scratch(
        "spec1.json",
        r#"{"A":[[0.5,-1],[0.25,2]],"V":[[1,0],[2,-1]]}"#,
    );
    let x = scratch("x1.json", r#"{"rows":2,"cols":2,"data":[1,2,-0.5,0.75]}"#);
    let plain = json(&bin().arg("simulate").arg(&spec).arg(&x).output().unwrap());
    let masked = json(
        &bin()
            .arg("simulate")
            .arg(&spec)
            .arg(&x)
            .args(["--host", "3,3,3"])
            .output()
            .unwrap(),
    );
    let unmasked = json(
        &bin()
            .arg("simulate")
            .arg(&spec)
            .arg(&x)
            .args(["--host", "3,3,3", "--no-mask-padding"])
            .output()
            .unwrap(),
    );
    let get = |v: &Value| -> Vec<f64> { serde_json::from_value(v["data"].clone()).unwrap() };
    for (a, b) in get(&plain).iter().zip(get(&masked)) {
        assert!((a - b).abs() <= 1e-9 * a.abs().max(1.0));
    }
    assert_ne!(get(&plain), get(&unmasked));
}

#[test]
fn verify_passes_and_rejects_bad_order() {
    let out = bin()
        .args(["verify", "attention", "--cases", "5"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(json(&out)["summary"]["failures"], 0);

    let out = bin()
        .args(["verify", "attention", "--n", "3", "--d", "2", "--dv", "2"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .contains("n <= min(d, d_v)"));
}

#[test]
fn verify_failure_exits_one() {
    // Attention is not bit-exact, so a zero tolerance fails.
    let out = bin()
        .args(["verify", "attention", "--cases", "5", "--tol", "0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn fuzz_is_deterministic_and_honours_seed_env() {
    let args = [
        "fuzz", "--check", "softmax", "--check", "matmul", "--cases", "4",
    ];
    let a = bin().args(args).output().unwrap();
    let b = bin().args(args).output().unwrap();
    assert!(a.status.success());
    assert_eq!(a.stdout, b.stdout);

    let c = bin()
        .args(args)
        .env("RASP_ATTN_SEED", "7")
        .output()
        .unwrap();
    assert_eq!(json(&c)["seed"], 7);
    let d = bin().args(args).args(["--seed", "7"]).output().unwrap();
    assert_eq!(c.stdout, d.stdout);
}

#[test]
fn inspect_program_metrics() {
    let out = bin()
        .arg("inspect")
        .arg(listing("matmul"))
        .output()
        .unwrap();
    let v = json(&out);
    assert_eq!(v["metrics"]["selector_count"], 19);
    assert_eq!(v["metrics"]["stratum_widths"], serde_json::json!([7, 12]));
    assert!(v.get("ast").is_none());

    let out = bin()
        .arg("inspect")
        .arg(listing("relu"))
        .arg("--ast")
        .output()
        .unwrap();
    assert_eq!(json(&out)["ast"]["type"], "Program");
}

#[test]
fn inspect_pipeline_manifest() {
    let out = bin()
        .args(["inspect", "--variant", "encoder", "--d1", "3"])
        .output()
        .unwrap();
    assert!(out.status.success());
    let v = json(&out);
    assert_eq!(v["variant"], "encoder");
    let names: Vec<&str> = v["stages"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["name"].as_str().unwrap())
        .collect();
    assert_eq!(names.last(), Some(&"Out"));
    assert!(names.contains(&"P"));
}
