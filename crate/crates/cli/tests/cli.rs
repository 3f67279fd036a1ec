use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_apportion"));
    c.env_remove("APPORTION_DATA_DIR").env_remove("RUST_LOG");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(out.status.success(), "{:?} failed: {}", args, String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn data_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &TempDir, preset: &str, name: &str) -> PathBuf {
    let path = dir.path().join(name);
    ok(&["--seed", "3", "synth", "--preset", preset, "--points", "100", "-o", s(&path)]);
    path
}

fn train(data: &Path, model: &Path, theta: &str, extra: &[&str]) {
    let mut args = vec!["--seed", "7", "train", "--data", s(data), "--theta", theta, "-o", s(model)];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn same_seed_gives_identical_model_files() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "quadrants", "q.libsvm");
    for kernel in ["linear", "rbf"] {
        let a = dir.path().join("a.model");
        let b = dir.path().join("b.model");
        let extra = ["--kernel", kernel, "--iterations", "5000"];
        train(&data, &a, "10,10,1,1", &extra);
        train(&data, &b, "10,10,1,1", &extra);
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }
    let a = dir.path().join("a.model");
    let c = dir.path().join("c.model");
    train(&data, &a, "10,10,1,1", &["--iterations", "5000"]);
    ok(&["--seed", "8", "train", "--data", s(&data), "--theta", "10,10,1,1", "--iterations", "5000", "-o", s(&c)]);
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn nonpositive_theta_is_rejected() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "two-blobs", "t.libsvm");
    let out = run(&["train", "--data", s(&data), "--theta", "0,1", "-o", s(&dir.path().join("m"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("priority entries must be positive"));
    assert!(!dir.path().join("m").exists());
}

#[test]
fn theta_length_must_match_classes() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "quadrants", "q.libsvm");
    let out = run(&["train", "--data", s(&data), "--theta", "1,2", "-o", s(&dir.path().join("m"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("theta has 2 entries but the data has 4 classes"));
}

#[test]
fn missing_data_file_fails() {
    let out = run(&["train", "--data", "/nonexistent/x.libsvm", "--theta", "1,1", "-o", "/tmp/never"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("cannot find"));
}

fn read_grid(path: &Path) -> Vec<(f64, f64, usize)> {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x1,x2,predicted_class"));
    lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap())
        })
        .collect()
}

#[test]
fn boundary_grid_has_resolution_squared_rows_and_points_file() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "quadrants", "q.libsvm");
    let model = dir.path().join("q.model");
    train(&data, &model, "10,10,1,1", &["--iterations", "20000"]);
    let grid = dir.path().join("grid.csv");
    ok(&["boundary-grid", "--model", s(&model), "--data", s(&data), "--resolution", "200", "-o", s(&grid)]);
    let rows = read_grid(&grid);
    assert_eq!(rows.len(), 40_000);
    assert_eq!((rows[0].0, rows[0].1), (-5.0, -5.0));
    assert_eq!((rows[39_999].0, rows[39_999].1), (5.0, 5.0));
    assert!(rows.iter().all(|r| r.2 < 4));

    let points = std::fs::read_to_string(dir.path().join("grid.points.csv")).unwrap();
    let mut lines = points.lines();
    assert_eq!(lines.next(), Some("x1,x2,label"));
    assert_eq!(lines.count(), 400);
}

/// Predicted classes along the grid row closest to `y`.
fn row_at(rows: &[(f64, f64, usize)], y: f64) -> Vec<(f64, usize)> {
    let best = rows.iter().map(|r| (r.1 - y).abs()).fold(f64::INFINITY, f64::min);
    rows.iter().filter(|r| (r.1 - y).abs() == best).map(|r| (r.0, r.2)).collect()
}

fn flips(row: &[(f64, usize)]) -> Vec<f64> {
    row.windows(2).filter(|w| w[0].1 != w[1].1).map(|w| 0.5 * (w[0].0 + w[1].0)).collect()
}

#[test]
fn uniform_two_class_boundary_flips_once() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "two-blobs", "t.libsvm");
    let model = dir.path().join("t.model");
    train(&data, &model, "1,1", &["--lambda", "1e-2", "--iterations", "100000"]);
    let grid = dir.path().join("g.csv");
    ok(&["boundary-grid", "--model", s(&model), "--data", s(&data), "--resolution", "201", "-o", s(&grid)]);
    let row = row_at(&read_grid(&grid), 0.0);
    let f = flips(&row);
    assert_eq!(f.len(), 1, "{:?}", f);
    assert!(f[0].abs() < 1.0, "boundary at {}", f[0]);
    assert_eq!(row.first().unwrap().1, 0);
    assert_eq!(row.last().unwrap().1, 1);
}

#[test]
fn costly_classes_push_boundaries_toward_cheap_ones() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "quadrants", "q.libsvm");
    let model = dir.path().join("q.model");
    train(&data, &model, "10,10,1,1", &["--lambda", "1e-3", "--iterations", "200000"]);
    let grid = dir.path().join("g.csv");
    ok(&["boundary-grid", "--model", s(&model), "--data", s(&data), "--bounds", "-6,6,-6,6", "--resolution", "241", "-o", s(&grid)]);
    let rows = read_grid(&grid);
    // Top row: class 0 (cost 10) left, class 2 (cost 1) right; bottom row: 1 and 3.
    for (y, left, right) in [(3.0, 0, 2), (-3.0, 1, 3)] {
        let row = row_at(&rows, y);
        assert_eq!(row.first().unwrap().1, left);
        assert_eq!(row.last().unwrap().1, right);
        let crossing = flips(&row);
        assert!(!crossing.is_empty());
        assert!(crossing.iter().all(|&x| x > 0.5), "row {}: {:?}", y, crossing);
    }
}

#[test]
fn boundary_grid_rejects_models_that_are_not_2d() {
    let dir = TempDir::new().unwrap();
    let iris = data_dir().join("iris.libsvm");
    let model = dir.path().join("iris.model");
    train(&iris, &model, "1,2,1", &["--iterations", "2000"]);
    let out = run(&["boundary-grid", "--model", s(&model), "--data", s(&iris), "-o", s(&dir.path().join("g.csv"))]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("2-D model"));
}

#[test]
fn predict_prints_one_class_name_per_point() {
    let dir = TempDir::new().unwrap();
    let iris = data_dir().join("iris.libsvm");
    let model = dir.path().join("iris.model");
    train(&iris, &model, "1,2,1", &["--kernel", "rbf", "--gamma", "0.5", "--c", "8"]);
    let out = ok(&["predict", "--model", s(&model), "--data", s(&iris)]);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 150);
    assert!(lines.iter().all(|l| ["1", "2", "3"].contains(l)));
    let truth: Vec<String> = std::fs::read_to_string(&iris)
        .unwrap()
        .lines()
        .map(|l| l.split_whitespace().next().unwrap().to_string())
        .collect();
    let right = lines.iter().zip(&truth).filter(|(a, b)| *a == b).count();
    assert!(right >= 140, "{} of 150", right);
}

#[test]
fn benchmark_with_one_method_prints_one_column() {
    let out = bin()
        .env("APPORTION_DATA_DIR", data_dir())
        .args(["--seed", "1", "benchmark", "--data", "iris.libsvm", "--theta", "1,2,1", "--methods", "apportioned"])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap().split_whitespace().collect::<Vec<_>>(), ["dataset", "apportioned"]);
    let row: Vec<&str> = lines.next().unwrap().split_whitespace().collect();
    assert_eq!(row[0], "iris");
    assert_eq!(row.len(), 4, "{:?}", row);
    let risk: f64 = row[1].parse().unwrap();
    assert!((0.0..=1.0).contains(&risk));
}

#[test]
fn benchmark_skips_missing_datasets() {
    let out = bin()
        .env("APPORTION_DATA_DIR", data_dir())
        .args([
            "benchmark", "--data", "nothere.libsvm", "--data", "iris.libsvm", "--theta", "1,2,1", "--methods", "cscs",
            "--c", "1", "--csv",
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("skipping nothere.libsvm"));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "dataset,method,expected_risk,important_class,sensitivity,c,gamma");
    assert_eq!(lines.len(), 2);
    assert!(lines[1].starts_with("iris,cscs,"));
    assert!(lines[1].ends_with(",1,"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "quadrants", "q.libsvm");
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "seed = 7\ntheta = [10, 10, 1, 1]\niterations = 3000\nstandardize = false\n").unwrap();
    let from_cfg = dir.path().join("a.model");
    ok(&["--config", s(&cfg), "train", "--data", s(&data), "-o", s(&from_cfg)]);
    let text = std::fs::read_to_string(&from_cfg).unwrap();
    assert!(text.contains("theta=10,10,1,1\n"));
    assert!(text.contains("scaler=none\n"));

    let explicit = dir.path().join("b.model");
    ok(&["--seed", "7", "train", "--data", s(&data), "--theta", "10,10,1,1", "--iterations", "3000", "--no-standardize", "-o", s(&explicit)]);
    assert_eq!(std::fs::read(&from_cfg).unwrap(), std::fs::read(&explicit).unwrap());

    let overridden = dir.path().join("c.model");
    ok(&["--config", s(&cfg), "train", "--data", s(&data), "--theta", "1,1,1,1", "-o", s(&overridden)]);
    assert!(std::fs::read_to_string(&overridden).unwrap().contains("theta=1,1,1,1\n"));

    std::fs::write(&cfg, "thetaa = \"1,1\"\n").unwrap();
    assert!(!run(&["--config", s(&cfg), "train", "--data", s(&data), "-o", s(&overridden)]).status.success());
}

#[test]
fn data_dir_environment_variable_resolves_names() {
    let dir = TempDir::new().unwrap();
    let model = dir.path().join("m");
    let out = bin()
        .env("APPORTION_DATA_DIR", data_dir())
        .args(["train", "--data", "iris.libsvm", "--theta", "1,2,1", "--iterations", "1000", "-o", s(&model)])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(model.exists());
}

#[test]
fn fisher_check_writes_a_csv_table_to_stdout() {
    let out = run(&["--seed", "2", "fisher-check", "--draws", "25"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 26);
    assert!(lines[0].starts_with("draw,k,p,theta,"));
    assert!(lines[1..].iter().all(|l| l.split(',').count() == 12));
    assert!(String::from_utf8_lossy(&out.stderr).contains("argmax agrees on"));
    assert_eq!(text, ok(&["--seed", "2", "fisher-check", "--draws", "25"]));
}

#[test]
fn synth_is_seeded() {
    let a = ok(&["--seed", "4", "synth", "--preset", "two-blobs", "--points", "20"]);
    let b = ok(&["--seed", "4", "synth", "--preset", "two-blobs", "--points", "20"]);
    let c = ok(&["--seed", "5", "synth", "--preset", "two-blobs", "--points", "20"]);
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.lines().count(), 40);
}

#[test]
fn logs_stay_off_stdout() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "two-blobs", "t.libsvm");
    let out = run(&["-v", "train", "--data", s(&data), "--theta", "2,1", "--iterations", "2000", "-o", s(&dir.path().join("m"))]);
    assert!(out.status.success());
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(!stdout.contains("INFO") && !stdout.contains("DEBUG"));
    assert!(stdout.contains("method=apportioned"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("INFO"));
}

#[test]
fn diagnose_reports_margins_for_linear_models_only() {
    let dir = TempDir::new().unwrap();
    let data = synth(&dir, "quadrants", "q.libsvm");
    let linear = dir.path().join("l.model");
    train(&data, &linear, "10,10,1,1", &["--iterations", "20000"]);
    let out = run(&["diagnose", "--model", s(&linear), "--data", s(&data)]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("pair,gamma,bound,eta,gamma_feature\n"));
    assert_eq!(text.lines().count(), 1 + 12);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("pairwise norm inequality") && stderr.contains(": true"));

    let rbf = dir.path().join("r.model");
    train(&data, &rbf, "10,10,1,1", &["--kernel", "rbf", "--iterations", "2000"]);
    assert!(!run(&["diagnose", "--model", s(&rbf), "--data", s(&data)]).status.success());
}
