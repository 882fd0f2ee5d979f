use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn focal(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_focal"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run focal")
}

fn report(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn verdict(args: &[&str]) -> String {
    let dir = tempfile::tempdir().unwrap();
    let mut full = vec!["focal-scan"];
    full.extend_from_slice(args);
    full.extend_from_slice(&["--directions", "16", "--out", "scan"]);
    let out = focal(&full, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    report(&dir.path().join("scan.json"))["result"]["verdict"]
        .as_str()
        .unwrap()
        .to_string()
}

#[test]
fn missing_axes_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = focal(&["simulate"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--axes"));
    assert!(!dir.path().join("trajectory.csv").exists());
}

#[test]
fn bad_input_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = focal(&["focal-scan", "--axes", "3,2,1", "--point", "1,2"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = focal(&["simulate", "--axes", "3,-2,1"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_csv_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let args = |stem| ["simulate", "--axes", "4,3,2,1", "--squared", "--seed", "42", "--t-max", "15", "--out", stem];
    for stem in ["a", "b"] {
        let out = focal(&args(stem), dir.path());
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    }
    let a = std::fs::read(dir.path().join("a.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b.csv")).unwrap();
    assert!(a.len() > 1000);
    assert_eq!(a, b);
    let header = String::from_utf8_lossy(&a).lines().next().unwrap().to_string();
    assert_eq!(
        header,
        "t,x_1,x_2,x_3,x_4,xi_1,xi_2,xi_3,xi_4,constraint_residual,speed_residual"
    );
    let r = report(&dir.path().join("a.json"));
    assert_eq!(r["schema_version"], 1);
    assert_eq!(r["seeds"][0], 42);
    assert_eq!(r["config"]["axes"], serde_json::json!([4.0, 3.0, 2.0, 1.0]));
    assert!(r["tolerances"]["focal.focal_tol"].is_number());
    assert!(r["result"]["max_lax_drift"].as_f64().unwrap() < 1e-9);
}

#[test]
fn sphere_simulation_closes_up() {
    let dir = tempfile::tempdir().unwrap();
    let out = focal(&["simulate", "--axes", "1,1,1", "--t-max", "7", "--out", "s"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = report(&dir.path().join("s.json"));
    let t = r["result"]["returns"][0]["return_time"].as_f64().unwrap();
    assert!((t - std::f64::consts::TAU).abs() < 1e-8);
}

#[test]
fn failed_integration_keeps_partial_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = focal(
        &["simulate", "--axes", "3,2,1", "--squared", "--t-max", "100", "--max-steps", "40", "--out", "p"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(3));
    let csv = std::fs::read_to_string(dir.path().join("p.csv")).unwrap();
    assert!(csv.lines().count() > 10);
    let r = report(&dir.path().join("p.json"));
    assert!(r["result"]["status"].as_str().unwrap().contains("step budget"));
    assert!(r["result"]["t_end"].as_f64().unwrap() < 100.0);
}

#[test]
fn umbilic_preset_is_self_focal() {
    assert_eq!(verdict(&["--axes", "3,2,1", "--squared", "--point", "umbilic"]), "self-focal-evidence");
}

#[test]
fn special_preset_is_self_focal() {
    assert_eq!(verdict(&["--axes", "3,2,2,1", "--squared", "--point", "special"]), "self-focal-evidence");
}

#[test]
fn generic_point_is_not_self_focal() {
    assert_eq!(verdict(&["--axes", "4,3,2,1", "--squared", "--point", "random", "--seed", "5"]), "not-self-focal");
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("c.toml"),
        "axes = [3, 2, 1]\nsquared = true\npoint = \"umbilic\"\ndirections = 8\nseed = 3\n",
    )
    .unwrap();
    let out = focal(&["focal-scan", "--config", "c.toml", "--seed", "4", "--out", "c"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let r = report(&dir.path().join("c.json"));
    assert_eq!(r["config"]["seed"], 4);
    assert_eq!(r["config"]["directions"], 8);
    assert_eq!(r["result"]["results"].as_array().unwrap().len(), 8);
    assert_eq!(r["result"]["verdict"], "self-focal-evidence");
}

#[test]
fn return_map_finds_two_fixed_directions() {
    let dir = tempfile::tempdir().unwrap();
    let out = focal(&["return-map", "--axes", "3,2,1", "--squared", "--directions", "32", "--out", "rm"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let r = report(&dir.path().join("rm.json"));
    assert_eq!(r["result"]["fixed"]["angles"].as_array().unwrap().len(), 2);
    let csv = std::fs::read_to_string(dir.path().join("rm.csv")).unwrap();
    assert_eq!(csv.lines().count(), 33);
}

#[test]
fn rosochatius_writes_experiment_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = focal(
        &["rosochatius", "--axes", "3,2,1", "--squared", "--directions", "4", "--j-grid", "0,0.1", "--out", "ro"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("ro.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "j,direction_index,return_time,miss_distance,halted_flag");
    assert_eq!(lines.count(), 8);
}

#[test]
fn suite_only_lax_runs_the_lax_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let out = focal(&["suite", "--only", "lax", "--out", "suite.json"], dir.path());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(out.status.code(), Some(0), "{stdout}");
    let ids: Vec<&str> = stdout
        .lines()
        .filter(|l| l.starts_with("PASS") || l.starts_with("FAIL"))
        .map(|l| l.split_whitespace().nth(1).unwrap())
        .collect();
    assert_eq!(ids, ["4", "5", "8", "9", "10", "11"]);
    let r = report(&dir.path().join("suite.json"));
    assert_eq!(r["result"]["passed"], true);
}

#[test]
fn suite_rejects_an_empty_selection() {
    let dir = tempfile::tempdir().unwrap();
    let out = focal(&["suite", "--only", "nothing"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
