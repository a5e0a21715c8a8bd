use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const SMALL_GRID: &str = r#""grid": { "mode": "axisym-m0", "n_radial": 8, "n_polar": 6 }"#;

fn kinetic(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kinetic"))
        .args(args)
        .current_dir(dir)
        .env_remove("KINETIC_CACHE_DIR")
        .output()
        .expect("binary runs")
}

fn config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn coeffs_on_default_config() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), "default.json", r#"{ "schema": 1 }"#);
    let out = kinetic(dir.path(), &["coeffs", "--config", "default.json", "--out", "o"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("o/coeffs.json"));
    let a: Vec<f64> = v["A"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert!((a[0] - a[2]).abs() <= 1e-8 * a[2].abs());
    assert!(a.iter().all(|x| *x < 0.0));
    assert!(v["a2"].as_f64().unwrap() > 0.0);
    assert_eq!(serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap(), v);
}

#[test]
fn conservation_suite_passes_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let run = |out: &str| kinetic(dir.path(), &["verify", "--suite", "conservation", "--out", out]);
    assert_eq!(run("a").status.code(), Some(0));
    assert_eq!(run("b").status.code(), Some(0));
    let a = fs::read(dir.path().join("a/verify-conservation.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b/verify-conservation.json")).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["passed"], true);
    assert_eq!(v["suite"], "conservation");
}

#[test]
fn failing_check_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(r#"{{ "schema": 1, {SMALL_GRID}, "tolerances": {{ "sound_speed": 1e-300 }} }}"#);
    config(dir.path(), "strict.json", &body);
    let out = kinetic(dir.path(), &["verify", "--suite", "speeds", "--format", "csv", "--config", "strict.json", "--out", "o"]);
    assert_eq!(out.status.code(), Some(3));
    let csv = fs::read_to_string(dir.path().join("o/verify-speeds.csv")).unwrap();
    let row: Vec<&str> = csv.lines().nth(1).unwrap().split(',').collect();
    assert_eq!(row[0], "sound-speeds");
    assert_eq!(row[2].parse::<f64>().unwrap(), 1e-300);
    assert_eq!(row[3], "false");
}

#[test]
fn dispersion_csv_shape() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), "small.json", &format!(r#"{{ "schema": 1, {SMALL_GRID} }}"#));
    let out = kinetic(dir.path(), &["dispersion", "--kmax", "0.5", "--nk", "64", "--config", "small.json", "--out", "o"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("o/dispersion-bb.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv.lines().skip(1).map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 64);
    assert!(rows.iter().all(|r| r.len() == 1 + 2 * 3));
    assert_eq!(rows[63][0], 0.5);
    // every branch decays
    assert!(rows.iter().all(|r| r[1] <= 0.0 && r[3] <= 0.0 && r[5] <= 0.0));
}

#[test]
fn usage_and_config_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(kinetic(dir.path(), &["coeffs", "--bogus"]).status.code(), Some(2));
    assert_eq!(kinetic(dir.path(), &["launch"]).status.code(), Some(2));
    assert_eq!(kinetic(dir.path(), &["--help"]).status.code(), Some(0));
    config(dir.path(), "v2.json", r#"{ "schema": 2 }"#);
    assert_eq!(kinetic(dir.path(), &["grid", "--config", "v2.json"]).status.code(), Some(2));
    config(dir.path(), "ladder.json", r#"{ "schema": 1, "spatial": { "half_length": 80, "max_dx": 0.055, "times": [20, 10], "sharpness": 24 } }"#);
    assert_eq!(kinetic(dir.path(), &["grid", "--config", "ladder.json"]).status.code(), Some(2));
    // the default box cannot hold sound waves at t = 160
    let out = kinetic(dir.path(), &["evolve", "--pair", "bb", "--out", "o"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("too small"));
}

#[test]
fn cache_directory_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("cache");
    config(dir.path(), "small.json", &format!(r#"{{ "schema": 1, {SMALL_GRID} }}"#));
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_kinetic"))
            .args(["assemble", "--pair", "bb", "--config", "small.json", "--out", "o"])
            .current_dir(dir.path())
            .env("KINETIC_CACHE_DIR", &cache)
            .output()
            .unwrap()
    };
    assert_eq!(run().status.code(), Some(0));
    let first = fs::read(dir.path().join("o/operator-bb.json")).unwrap();
    let files: Vec<PathBuf> = fs::read_dir(&cache).unwrap().flat_map(|d| fs::read_dir(d.unwrap().path()).unwrap()).map(|e| e.unwrap().path()).collect();
    assert_eq!(files.len(), 1);
    assert!(files[0].extension().is_some_and(|e| e == "bkin"));
    assert_eq!(run().status.code(), Some(0));
    assert_eq!(first, fs::read(dir.path().join("o/operator-bb.json")).unwrap());
}

#[test]
fn grid_and_modes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    config(dir.path(), "small.json", &format!(r#"{{ "schema": 1, {SMALL_GRID} }}"#));
    assert_eq!(kinetic(dir.path(), &["grid", "--config", "small.json", "--out", "o"]).status.code(), Some(0));
    assert_eq!(json(&dir.path().join("o/grid.json"))["nodes"], 48);
    assert_eq!(kinetic(dir.path(), &["modes", "--config", "small.json", "--out", "o"]).status.code(), Some(0));
    let v = json(&dir.path().join("o/modes.json"));
    let c = (5.0f64 / 3.0).sqrt();
    let speeds: Vec<f64> = v["speeds"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    for (s, e) in speeds.iter().zip([-c, 0.0, c]) {
        assert!((s - e).abs() <= 1e-10, "{speeds:?}");
    }
}

#[test]
fn ab_evolution_reports_fits() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        r#"{{ "schema": 1, {SMALL_GRID}, "spatial": {{ "half_length": 30, "max_dx": 0.055, "times": [5, 10, 20, 40], "sharpness": 24 }} }}"#
    );
    config(dir.path(), "ab.json", &body);
    let out = kinetic(dir.path(), &["evolve", "--variants", "full,P1-left", "--config", "ab.json", "--out", "o"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = json(&dir.path().join("o/evolve-ab.json"));
    let slope = v["full"]["humps"][0]["decay"]["slope"].as_f64().unwrap();
    assert!((slope + 0.5).abs() < 0.1, "{slope}");
    assert!(v["P1-left"]["humps"][0]["decay"]["slope"].as_f64().unwrap() < slope);
    let csv = fs::read_to_string(dir.path().join("o/evolve-ab-t40.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "x,full,P1-left");
}
