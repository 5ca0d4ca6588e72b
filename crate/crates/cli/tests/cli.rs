use std::path::Path;
use std::process::{Command, Output};

fn powerdrop(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_powerdrop"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .env_remove("POWERDROP_OUT_DIR")
        .output()
        .unwrap()
}

fn trained(dir: &Path) {
    std::fs::write(
        dir.join("moons.json"),
        r#"{
            "model": {"type": "mlp", "hidden": [8]},
            "dropout": {"sites": [{"site": "layer1", "rate": 0.3}]},
            "optimizer": {"type": "adam", "lr": 0.01},
            "batch_size": 8, "steps": 40, "seed": 3,
            "data": {"type": "moons", "samples": 120},
            "eval": {"alphas": ["det", 0, 1], "lambdas": [0.5, 1], "samples": 16}
        }"#,
    )
    .unwrap();
    let out = powerdrop(&["train", "moons.json", "--out", "ck.json"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = powerdrop(&["selftest"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
}

#[test]
fn usage_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(powerdrop(&["eval", "--bogus"], dir.path()).status.code(), Some(1));
    assert_eq!(powerdrop(&[], dir.path()).status.code(), Some(1));
    assert_eq!(powerdrop(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    trained(dir.path());
    let out = powerdrop(&["eval", "ck.json", "--alpha", "1.5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("[0, 1]"));

    let out = powerdrop(&["eval", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn commands_run_on_a_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    trained(d);

    let out = powerdrop(&["eval", "ck.json", "--alpha", "0.5", "--samples", "10"], d);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["xe"].as_f64().unwrap() > 0.0);

    let first = powerdrop(&["sweep", "ck.json"], d);
    let again = powerdrop(&["sweep", "ck.json"], d);
    assert!(first.status.success());
    assert_eq!(first.stdout, again.stdout);
    // det, 0 and 1 at two lambdas on the validation split
    assert_eq!(String::from_utf8_lossy(&first.stdout).lines().count(), 7);

    let out = powerdrop(&["bounds", "ck.json", "--samples", "20"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["jensen_gap"].as_f64().unwrap() >= 0.0);

    let out = powerdrop(&["tune-temp", "ck.json", "--grid", "0.5,2,16"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));

    let out = powerdrop(&["buckets", "ck.json", "--samples", "8", "--out", "b.csv"], d);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(std::fs::read_to_string(d.join("b.csv")).unwrap().starts_with("split,"));
}
