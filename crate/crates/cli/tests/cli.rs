use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn ksid(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ksid"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn write_config(dir: &Path, text: &str) {
    fs::write(dir.join("c.toml"), text).unwrap();
}

fn csv_column(path: &Path, col: usize) -> Vec<f64> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(col).unwrap().parse().unwrap())
        .collect()
}

const SCALAR: &str = r#"
seed = 1
[kernel]
family = "tc"
domain = "discrete"
beta = 0.5
[input]
kind = "impulse"
length = 1
[system]
type = "table"
values = [1.0, 0.5, 0.25]
[samples]
times = [2]
[estimate]
lambda = 0.25
"#;

#[test]
fn scalar_example_end_to_end() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), SCALAR);
    assert!(ksid(dir.path(), &["simulate", "--config", "c.toml"])
        .status
        .success());
    assert!(ksid(dir.path(), &["identify", "--config", "c.toml"])
        .status
        .success());
    let g = csv_column(&dir.path().join("out/impulse.csv"), 1);
    assert_eq!(g[2], 0.125);
    let est = fs::read_to_string(dir.path().join("out/estimate.toml")).unwrap();
    assert!(est.contains("coefficients = [0.5]"));
}

#[test]
fn single_entry_grid_matches_scalar() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), SCALAR);
    assert!(ksid(dir.path(), &["simulate", "--config", "c.toml"])
        .status
        .success());
    let out = ksid(
        dir.path(),
        &[
            "identify",
            "--config",
            "c.toml",
            "--lambda",
            "log:0.25:0.25:1",
        ],
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert_eq!(csv_column(&dir.path().join("out/impulse.csv"), 1)[2], 0.125);
}

#[test]
fn manifest_records_hashes_and_seeds() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), SCALAR);
    assert!(ksid(
        dir.path(),
        &["simulate", "--config", "c.toml", "--seed", "9"]
    )
    .status
    .success());
    let m: toml::Table = fs::read_to_string(dir.path().join("out/simulate_manifest.toml"))
        .unwrap()
        .parse()
        .unwrap();
    assert_eq!(m["seed"].as_integer(), Some(9));
    assert_eq!(m["config_sha256"].as_str().unwrap().len(), 64);
    assert!(m.contains_key("noise_seed") && m.contains_key("tolerances"));
}

#[test]
fn noiseless_impulse_input_reproduces_truth() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        r#"
seed = 2
[kernel]
family = "tc"
domain = "discrete"
beta = 0.8
[input]
kind = "impulse"
length = 1
[system]
type = "one_pole"
a = 0.8
[samples]
start = 0
step = 1
count = 40
[estimate]
lambda = 1e-8
"#,
    );
    assert!(ksid(dir.path(), &["simulate", "--config", "c.toml"])
        .status
        .success());
    let y = csv_column(&dir.path().join("out/dataset.csv"), 1);
    let g = csv_column(&dir.path().join("out/true_impulse.csv"), 1);
    for (a, b) in y.iter().zip(&g) {
        assert!((a - b).abs() <= 1e-15);
    }
    assert!(ksid(dir.path(), &["identify", "--config", "c.toml"])
        .status
        .success());
    let g_hat = csv_column(&dir.path().join("out/impulse.csv"), 1);
    let err = g_hat
        .iter()
        .zip(&g)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(err <= 1e-3, "{err}");
}

#[test]
fn step_response_settles() {
    let dir = tempfile::tempdir().unwrap();
    write_config(
        dir.path(),
        r#"
[input]
kind = "step"
length = 300
[system]
type = "one_pole"
a = 0.8
[samples]
times = [250]
"#,
    );
    assert!(ksid(dir.path(), &["simulate", "--config", "c.toml"])
        .status
        .success());
    let y = csv_column(&dir.path().join("out/dataset.csv"), 1);
    assert!((y[0] - 5.0).abs() < 1e-6);
}

#[test]
fn verify_tc_suite_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ksid(
        dir.path(),
        &[
            "verify", "--kernel", "tc", "--domain", "discrete", "--beta", "0.5",
        ],
    );
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stdout)
    );
    let rows = fs::read_to_string(dir.path().join("out/checks.csv")).unwrap();
    let names: std::collections::BTreeSet<&str> = rows
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(names.len(), 4);
    assert_eq!(
        String::from_utf8_lossy(&out.stdout)
            .lines()
            .filter(|l| l.contains("pass"))
            .count(),
        4
    );
}

#[test]
fn verify_constant_kernel_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = ksid(
        dir.path(),
        &["verify", "--kernel", "constant", "--value", "1"],
    );
    assert_eq!(out.status.code(), Some(1));
    let checks = fs::read_to_string(dir.path().join("out/checks.toml")).unwrap();
    assert!(checks.contains("fail"));
}

#[test]
fn config_errors_report_line() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), "seed = 1\n[noise]\nsigma = 0.1\nbogus = 3\n");
    let out = ksid(dir.path(), &["simulate", "--config", "c.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("c.toml:4:"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        ksid(dir.path(), &["verify", "--kernel", "dc", "--beta", "0.5"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        ksid(dir.path(), &["identify", "--lambda", "-1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(ksid(dir.path(), &["frobnicate"]).status.code(), Some(2));
    assert_eq!(ksid(dir.path(), &["simulate"]).status.code(), Some(2));
}

#[test]
fn flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    write_config(dir.path(), SCALAR);
    assert!(ksid(dir.path(), &["simulate", "--config", "c.toml"])
        .status
        .success());
    assert!(ksid(
        dir.path(),
        &["identify", "--config", "c.toml", "--lambda", "0.75"]
    )
    .status
    .success());
    // c = 0.25 / (0.25 + 0.75)
    let est = fs::read_to_string(dir.path().join("out/estimate.toml")).unwrap();
    assert!(est.contains("lambda = 0.75") && est.contains("coefficients = [0.25]"));
}

#[test]
fn kernels_lists_families() {
    let out = ksid(Path::new("."), &["kernels"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for f in ["tc", "dc", "ss", "constant", "tabulated"] {
        assert!(text.lines().any(|l| l.starts_with(f)));
    }
}
