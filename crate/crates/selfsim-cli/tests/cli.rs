use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn selfsim(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_selfsim"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

/// CSV rows after the identification comment, split into fields.
fn csv_rows(path: &Path) -> Vec<Vec<String>> {
    let text = fs::read_to_string(path).unwrap();
    assert!(text.starts_with("# selfsim "), "missing identification line in {}", path.display());
    text.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

#[test]
fn default_profile_matches_closed_form() {
    let dir = TempDir::new().unwrap();
    let run = selfsim(&["profile"], dir.path());
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let rows = csv_rows(&dir.path().join("profile_d3_eps+0.0000.csv"));
    assert_eq!(rows[0], ["rho", "f", "df"]);
    let mut worst = 0.0f64;
    for r in &rows[1..] {
        let rho: f64 = r[0].parse().unwrap();
        let f: f64 = r[1].parse().unwrap();
        let df: f64 = r[2].parse().unwrap();
        worst = worst.max((f - 2.0 * rho.atan()).abs()).max((df - 2.0 / (1.0 + rho * rho)).abs());
    }
    assert!(worst < 1e-8, "{worst}");
    let stored = json(&dir.path().join("profile_d3_eps+0.0000.json"));
    assert_eq!(stored["manifest"]["config_hash"].as_str().unwrap().len(), 64);
    assert!(stored["residuals"]["passed"].as_bool().unwrap());
}

#[test]
fn epsilon_grid_writes_each_profile_and_lipschitz_report() {
    let dir = TempDir::new().unwrap();
    let run = selfsim(&["profile", "--epsilon=-0.02,0,0.02"], dir.path());
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    for eps in ["-0.0200", "+0.0000", "+0.0200"] {
        assert!(dir.path().join(format!("profile_d3_eps{eps}.json")).exists());
    }
    let lip = json(&dir.path().join("lipschitz.json"));
    assert_eq!(lip["pairs"].as_array().unwrap().len(), 3);
    assert!(lip["max"][0].as_f64().unwrap().is_finite());
    assert_eq!(csv_rows(&dir.path().join("residuals.csv")).len(), 4);
}

#[test]
fn invalid_dimension_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    let run = selfsim(&["profile", "--d", "2"], dir.path());
    assert_eq!(run.status.code(), Some(3));
    assert!(!dir.path().join("manifest.json").exists());
}

#[test]
fn spectrum_reports_gauge_eigenvalue_and_drift() {
    let dir = TempDir::new().unwrap();
    let run = selfsim(&["spectrum", "--grid", "64,128"], dir.path());
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let report = json(&dir.path().join("spectrum_d3_eps+0.0000_n128.json"));
    let lambda = report["unstable"]["eigenvalue"]["re"].as_f64().unwrap();
    assert!((lambda - 1.0).abs() < 1e-6, "{lambda}");
    for n in [64, 128] {
        let rows = csv_rows(&dir.path().join(format!("eigenvalues_d3_eps+0.0000_n{n}.csv")));
        assert_eq!(rows[0], ["re", "im", "drift", "converged"]);
    }
}

#[test]
fn spectrum_from_saved_profile_and_missing_profile() {
    let dir = TempDir::new().unwrap();
    assert_eq!(selfsim(&["profile", "--d", "5"], &dir.path().join("p")).status.code(), Some(0));
    let saved = dir.path().join("p/profile_d5_eps+0.0000.json");
    let run = selfsim(&["spectrum", "--profile", saved.to_str().unwrap()], &dir.path().join("s"));
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(dir.path().join("s/gap_d5_eps+0.0000.json").exists());
    let missing = dir.path().join("nowhere.json");
    let run = selfsim(&["spectrum", "--profile", missing.to_str().unwrap()], &dir.path().join("m"));
    assert_eq!(run.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&run.stderr).contains("missing input"));
}

#[test]
fn unperturbed_evolution_keeps_blowup_time() {
    let dir = TempDir::new().unwrap();
    let run = selfsim(&["evolve", "--grid", "128", "--tau-max", "2"], dir.path());
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let report = json(&dir.path().join("decay_d3_eps+0.0000.json"));
    assert!((report["summary"]["t_star"].as_f64().unwrap() - 1.0).abs() <= 1e-8);
}

fn bump_config(dir: &Path, amplitude: f64) -> String {
    let path = dir.join(format!("bump_{amplitude}.toml"));
    let text = format!(
        "[target]\nepsilon = 0.02\n\n[evolution]\nintervals = 128\ntau_max = 6.0\n\n\
         [evolution.perturbation]\namplitude = [{amplitude}, {amplitude}]\n\n\
         [evolution.perturbation.shape]\nkind = \"bump\"\nradius = 1.5\n"
    );
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn bump_run_reports_decay_columns() {
    let dir = TempDir::new().unwrap();
    let config = bump_config(dir.path(), 0.01);
    let run = selfsim(&["evolve", "--config", &config], &dir.path().join("out"));
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let report = json(&dir.path().join("out/decay_d3_eps+0.0200.json"));
    let summary = &report["summary"];
    assert_eq!(summary["status"], "completed");
    let rates: Vec<f64> = summary["rates"].as_array().unwrap().iter().map(|r| r.as_f64().unwrap()).collect();
    assert_eq!(rates.len(), 3);
    assert!(rates.iter().all(|&r| r > 0.0), "{rates:?}");
    let monotone = summary["monotone"].as_array().unwrap();
    assert!(monotone[1].as_bool().unwrap() && monotone[2].as_bool().unwrap());
    let rows = csv_rows(&dir.path().join("out/decay_d3_eps+0.0200.csv"));
    assert_eq!(rows[0].join(","), "tau,a,norm0,norm1,norm2,sup1,sup2,t,origin_scaled_gradient");
}

#[test]
fn oversized_perturbation_gives_flagged_partial_report() {
    let dir = TempDir::new().unwrap();
    let config = bump_config(dir.path(), 3.0);
    let run = selfsim(&["evolve", "--config", &config], &dir.path().join("out"));
    assert_eq!(run.status.code(), Some(2));
    let report = json(&dir.path().join("out/decay_d3_eps+0.0200.json"));
    assert_eq!(report["summary"]["status"], "blowup_detected");
    assert!(report["report"]["blowup"].as_f64().is_some());
    assert!(!report["report"]["samples"].as_array().unwrap().is_empty());
}

#[test]
fn sweep_rows_and_validation() {
    let dir = TempDir::new().unwrap();
    assert_eq!(selfsim(&["sweep"], &dir.path().join("empty")).status.code(), Some(3));

    let run = selfsim(&["sweep", "--epsilon", "0", "--grid", "128", "--tau-max", "2"], &dir.path().join("one"));
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(csv_rows(&dir.path().join("one/sweep.csv")).len(), 2);

    let grid = ["sweep", "--epsilon=0.02,-0.02,0,-0.01,0.01", "--grid", "128", "--tau-max", "2"];
    let run = selfsim(&grid, &dir.path().join("grid"));
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let rows = csv_rows(&dir.path().join("grid/sweep.csv"));
    let col = |name: &str| rows[0].iter().position(|h| h == name).unwrap();
    let (eps, slope, mono) = (col("epsilon"), col("gap_slope"), col("gap_monotone"));
    let values: Vec<f64> = rows[1..].iter().map(|r| r[eps].parse().unwrap()).collect();
    assert_eq!(values, [-0.02, -0.01, 0.0, 0.01, 0.02]);
    assert!(rows[1][slope].is_empty());
    assert!(rows[2..].iter().all(|r| r[slope].parse::<f64>().unwrap() > 0.0 && r[mono] == "true"));
}

#[test]
fn identical_configs_give_identical_csv() {
    let dir = TempDir::new().unwrap();
    let toml = dir.path().join("c.toml");
    fs::write(&toml, "seed = 4\n[target]\nd = 5\nepsilon = 0.01\n").unwrap();
    let json_cfg = dir.path().join("c.json");
    fs::write(&json_cfg, r#"{"seed": 4, "target": {"d": 5, "epsilon": 0.01}}"#).unwrap();
    let a = selfsim(&["profile", "--config", toml.to_str().unwrap()], &dir.path().join("a"));
    let b = selfsim(&["profile", "--config", json_cfg.to_str().unwrap(), "--workers", "3"], &dir.path().join("b"));
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    for name in ["profile_d5_eps+0.0100.csv", "residuals.csv"] {
        assert_eq!(fs::read(dir.path().join("a").join(name)).unwrap(), fs::read(dir.path().join("b").join(name)).unwrap());
    }
}
