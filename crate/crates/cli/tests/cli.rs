use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surfspline"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn predictions(path: &Path) -> Vec<f64> {
    let mut r = csv::Reader::from_path(path).unwrap();
    r.records().map(|rec| rec.unwrap()[1].parse().unwrap()).collect()
}

fn design(dir: &Path, mesh: &str, n: &str, truth: &str) -> String {
    let d = dir.to_str().unwrap();
    ok(&["design", "--mesh", mesh, "--n", n, "--truth", truth, "--seed", "3", "--restarts", "20", "--output-dir", d]);
    dir.join("observations.csv").to_str().unwrap().to_string()
}

#[test]
fn mesh_gen_writes_summary() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["mesh-gen", "--sphere", "--refinement", "2", "--output-dir", d]);
    let s = json(&dir.path().join("mesh_summary.json"));
    assert_eq!(s["vertices"], 162);
    assert_eq!(s["euler_characteristic"], 2);
    assert!(dir.path().join("mesh.off").exists());
    assert!(dir.path().join("mesh_chart.csv").exists());

    ok(&["mesh-gen", "--cylinder", "--ntheta", "12", "--nz", "5", "--output-dir", d]);
    let s = json(&dir.path().join("mesh_summary.json"));
    assert_eq!(s["vertices"], 60);
    assert_eq!(s["euler_characteristic"], 0);
}

#[test]
fn generated_mesh_round_trips_through_file_spec() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["mesh-gen", "--sphere", "--refinement", "2", "--output-dir", d]);
    let obs = design(dir.path(), "sphere:2", "12", "sphere");
    let file_mesh = format!("file:{}", dir.path().join("mesh.off").display());
    let chart = dir.path().join("mesh_chart.csv");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    ok(&["predict", "--mesh", "sphere:2", "--observations", &obs, "--output-dir", a.to_str().unwrap()]);
    ok(&[
        "predict", "--mesh", &file_mesh, "--chart", chart.to_str().unwrap(),
        "--observations", &obs, "--output-dir", b.to_str().unwrap(),
    ]);
    let pa = predictions(&a.join("predictions.csv"));
    let pb = predictions(&b.join("predictions.csv"));
    let diff = pa.iter().zip(&pb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    assert!(diff < 1e-9, "{diff}");
}

#[test]
fn predict_interpolates_and_ignores_alpha() {
    let dir = tempfile::tempdir().unwrap();
    let obs = design(dir.path(), "sphere:2", "15", "sphere");
    let a = dir.path().join("a");
    ok(&["predict", "--mesh", "sphere:2", "--observations", &obs, "--truth", "sphere", "--output-dir", a.to_str().unwrap()]);
    let diag = json(&a.join("diagnostics.json"));
    assert_eq!(diag["scenario"], "interpolation");
    assert!(diag["max_abs_residual"].as_f64().unwrap() < 1e-8);
    assert!(diag["rmse"].as_f64().unwrap() > 0.0);

    let alpha = diag["alpha"].as_f64().unwrap();
    let b = dir.path().join("b");
    ok(&[
        "predict", "--mesh", "sphere:2", "--observations", &obs,
        "--alpha", &(10.0 * alpha).to_string(), "--output-dir", b.to_str().unwrap(),
    ]);
    let pa = predictions(&a.join("predictions.csv"));
    let pb = predictions(&b.join("predictions.csv"));
    let scale = pa.iter().map(|x| x.abs()).fold(0.0, f64::max);
    for (x, y) in pa.iter().zip(&pb) {
        assert!((x - y).abs() <= 1e-6 * scale);
    }
}

#[test]
fn smoothing_at_free_points() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("points.csv");
    fs::write(&obs, "x,y,z,value\n0,0,1,1.0\n1,0,0,-0.5\n0,1,0,0.25\n0.6,0,0.8,0.7\n").unwrap();
    let o = obs.to_str().unwrap();
    let d = dir.path().to_str().unwrap();
    ok(&["predict", "--mesh", "sphere:2", "--observations", o, "--tau", "0.1", "--output-dir", d]);
    let diag = json(&dir.path().join("diagnostics.json"));
    assert_eq!(diag["scenario"], "smoothing");
    assert!(diag["residual_norm"].as_f64().unwrap() > 0.0);

    let out = run(&["predict", "--mesh", "sphere:2", "--observations", o, "--output-dir", d]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    design(dir.path(), "sphere:2", "10", "sphere");
    fs::write(
        dir.path().join("run.toml"),
        "mesh = \"sphere:2\"\nobservations = \"observations.csv\"\ntruth = \"sphere\"\noutput_dir = \"out\"\n",
    )
    .unwrap();
    let cfg = dir.path().join("run.toml");
    ok(&["predict", "--config", cfg.to_str().unwrap()]);
    assert!(dir.path().join("out/predictions.csv").exists());

    let other = dir.path().join("other");
    ok(&["predict", "--config", cfg.to_str().unwrap(), "--output-dir", other.to_str().unwrap()]);
    assert!(other.join("diagnostics.json").exists());

    fs::write(dir.path().join("bad.toml"), "mesh = \"sphere:2\"\nunknown_key = 1\n").unwrap();
    let out = run(&["predict", "--config", dir.path().join("bad.toml").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn fit_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let obs = design(dir.path(), "cylinder:12x10", "10", "cylinder");
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let out = dir.path().join(name);
        ok(&[
            "fit", "--mesh", "cylinder:12x10", "--observations", &obs, "--truth", "cylinder",
            "--seed", "5", "--max-evaluations", "24", "--output-dir", out.to_str().unwrap(),
        ]);
        outputs.push(fs::read_to_string(out.join("fit.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let fit: Value = serde_json::from_str(&outputs[0]).unwrap();
    assert!(fit["evaluations"].as_u64().unwrap() <= 24);
    assert!(fit["loglik"].as_f64().unwrap() >= fit["loglik_isotropic"].as_f64().unwrap() - 1e-9);
    assert!(fit["rmse_fitted"].as_f64().is_some());
}

#[test]
fn compare_and_bench_on_unit_sphere() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path().to_str().unwrap();
    let obs = design(dir.path(), "sphere:2", "12", "sphere");
    ok(&["compare", "--mesh", "sphere:2", "--observations", &obs, "--truth", "sphere", "--output-dir", d]);
    let c = json(&dir.path().join("compare.json"));
    assert!(c["correlation_fem_isotropic_classical"].as_f64().unwrap() > 0.9);
    assert!(c["rmse_classical"].as_f64().is_some());

    ok(&["bench", "--mesh", "sphere:2", "--n-grid", "5,20", "--output-dir", d]);
    let timing = fs::read_to_string(dir.path().join("timing.csv")).unwrap();
    let lines: Vec<&str> = timing.lines().collect();
    assert_eq!(lines[0], "n,fem_seconds,classical_seconds");
    assert_eq!(lines.len(), 3);

    let out = run(&["compare", "--mesh", "cylinder:12x10", "--observations", &obs, "--output-dir", d]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn input_errors_exit_with_two() {
    for args in [
        vec!["predict", "--mesh", "torus:3", "--observations", "x.csv"],
        vec!["predict", "--mesh", "sphere:1", "--observations", "/nonexistent/obs.csv"],
        vec!["design", "--mesh", "sphere:1"],
        vec!["mesh-gen", "--mesh", "file:/nonexistent/mesh.off"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}
