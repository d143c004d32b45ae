use std::path::Path;
use std::process::{Command, Output};

use robust_mean::bench::{read_points_file, read_sidecar, sidecar_path, BenchReport};
use tempfile::TempDir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_robust-mean"))
        .args(args)
        .env("ROBUST_MEAN_LOG", "off")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn generate(dir: &TempDir, name: &str, extra: &[&str]) -> std::path::PathBuf {
    let path = dir.path().join(name);
    let mut args = vec!["generate", "--output", path_str(&path)];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    path
}

#[test]
fn generate_is_reproducible() {
    let dir = TempDir::new().unwrap();
    let flags = ["--d", "4", "--n", "50", "--eps", "0.2", "--seed", "17"];
    let a = generate(&dir, "a.csv", &flags);
    let b = generate(&dir, "b.csv", &flags);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    assert_eq!(
        std::fs::read(sidecar_path(&a)).unwrap(),
        std::fs::read(sidecar_path(&b)).unwrap()
    );
    let c = generate(
        &dir,
        "c.csv",
        &["--d", "4", "--n", "50", "--eps", "0.2", "--seed", "18"],
    );
    assert_ne!(std::fs::read(&a).unwrap(), std::fs::read(&c).unwrap());
}

#[test]
fn generate_marks_corrupted_rows() {
    let dir = TempDir::new().unwrap();
    let path = generate(
        &dir,
        "x.csv",
        &["--d", "3", "--n", "10", "--eps", "0.2", "--seed", "1"],
    );
    let meta = read_sidecar(&sidecar_path(&path)).unwrap();
    assert_eq!(meta.corrupted_indices().len(), 2);
    assert_eq!(meta.seed, Some(1));
    let points = read_points_file(&path, false).unwrap();
    assert_eq!((points.n(), points.d()), (10, 3));
}

#[test]
fn generate_clean_sample_with_header() {
    let dir = TempDir::new().unwrap();
    let path = generate(
        &dir,
        "x.csv",
        &["--d", "2", "--n", "3", "--eps", "0", "--header"],
    );
    let text = std::fs::read_to_string(&path).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert_eq!(lines[0], "x1,x2");
    let meta = read_sidecar(&sidecar_path(&path)).unwrap();
    assert!(meta.inlier_mask.iter().all(|&m| m));
}

#[test]
fn estimate_reads_generated_data() {
    let dir = TempDir::new().unwrap();
    let path = generate(
        &dir,
        "x.csv",
        &["--d", "5", "--n", "200", "--eps", "0.1", "--seed", "3"],
    );
    let report = dir.path().join("est.json");
    let out = run(&["estimate", path_str(&path), "--output", path_str(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["estimate"].as_array().unwrap().len(), 5);
    assert!(v["iterations"].as_u64().unwrap() >= 1);
    assert!(v["sigma"].as_f64().unwrap() > 0.0);

    // Standard output carries the same summary when no path is given.
    let out = run(&["estimate", path_str(&path), "--sigma", "1.0", "--p", "0.5"]);
    assert_eq!(code(&out), 0);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["sigma"].as_f64(), Some(1.0));
}

#[test]
fn estimate_without_sigma_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("plain.csv");
    std::fs::write(&path, "1,2\n3,4\n").unwrap();
    assert_eq!(code(&run(&["estimate", path_str(&path)])), 1);
    assert_eq!(
        code(&run(&["estimate", path_str(&path), "--sigma", "1"])),
        0
    );
}

#[test]
fn malformed_data_is_a_data_error() {
    let dir = TempDir::new().unwrap();
    let path = dir.path().join("bad.csv");
    std::fs::write(&path, "1,2\n3\n").unwrap();
    let out = run(&["estimate", path_str(&path), "--sigma", "1"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("row 2"));
    let missing = dir.path().join("missing.csv");
    assert_eq!(
        code(&run(&["estimate", path_str(&missing), "--sigma", "1"])),
        2
    );
}

#[test]
fn bad_arguments_are_usage_errors() {
    assert_eq!(code(&run(&["frobnicate"])), 1);
    assert_eq!(code(&run(&["generate"])), 1);
    assert_eq!(code(&run(&["bench"])), 1);
    assert_eq!(
        code(&run(&["generate", "--output", "x.csv", "--eps", "0.6"])),
        1
    );
    assert_eq!(code(&run(&["--help"])), 0);
    assert_eq!(code(&run(&["--version"])), 0);
}

#[test]
fn bench_writes_reports() {
    let dir = TempDir::new().unwrap();
    let cfg = dir.path().join("exp.toml");
    std::fs::write(
        &cfg,
        "setting = \"gaussian_two_cluster\"\nd = 4\nn = 80\neps = [0.0, 0.1]\ntrials = 1\nestimators = [\"mean\", \"l1\"]\n",
    )
    .unwrap();
    let base = dir.path().join("out");
    let out = run(&[
        "bench",
        "--config",
        path_str(&cfg),
        "--output",
        path_str(&base),
        "--seed",
        "5",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("n,eps,mean,l1"));
    let report = BenchReport::load(&base.with_extension("json")).unwrap();
    assert_eq!(report.config.seed, 5);
    assert_eq!(report.aggregate(80, 0.0, "mean").unwrap().mean_error, 0.0);
    assert!(base.with_extension("csv").exists());

    std::fs::write(&cfg, "setting = \"gaussian_two_cluster\"\nbogus = 1\n").unwrap();
    assert_eq!(code(&run(&["bench", "--config", path_str(&cfg)])), 1);
}
