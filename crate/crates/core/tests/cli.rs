use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures").join(name)
}

fn run(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_perihyp"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn code(args: &[&str], out: &Path) -> i32 {
    run(args, out).status.code().expect("exit code")
}

fn small(cmd: &'static str, problem: &Path) -> Vec<String> {
    vec![cmd.into(), "--problem".into(), problem.display().to_string(), "--nt".into(), "16".into(), "--nx".into(), "20".into()]
}

fn refs(v: &[String]) -> Vec<&str> {
    v.iter().map(String::as_str).collect()
}

#[test]
fn solve_succeeds_and_writes_reports() {
    let dir = tempfile::tempdir().unwrap();
    let args = small("solve", &fixture("manufactured_first_order.json"));
    assert_eq!(code(&refs(&args), dir.path()), 0);
    for file in ["solution.csv", "solve_report.json", "nonresonance.json"] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("solve_report.json")).unwrap()).unwrap();
    assert!(report["exact_error"].as_f64().unwrap() < 1e-2);
}

#[test]
fn wave_solve_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let args = small("solve", &fixture("manufactured_wave.json"));
    assert_eq!(code(&refs(&args), dir.path()), 0);
    assert!(dir.path().join("first_order_solution.csv").exists());
}

#[test]
fn json_reports_are_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let args = small("solve", &fixture("manufactured_first_order.json"));
    let files = ["solve_report.json", "nonresonance.json", "solution.csv"];
    assert_eq!(code(&refs(&args), dir.path()), 0);
    let first: Vec<Vec<u8>> = files.iter().map(|f| std::fs::read(dir.path().join(f)).unwrap()).collect();
    assert_eq!(code(&refs(&args), dir.path()), 0);
    for (file, before) in files.iter().zip(&first) {
        assert_eq!(&std::fs::read(dir.path().join(file)).unwrap(), before, "{file} differs");
    }
}

#[test]
fn malformed_problem_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let args = small("solve", &fixture("malformed.json"));
    let out = run(&refs(&args), dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(!out.stderr.is_empty());
}

#[test]
fn grid_outside_range_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let problem = fixture("manufactured_first_order.json");
    let args = ["solve", "--problem", problem.to_str().unwrap(), "--nt", "4"];
    assert_eq!(code(&args, dir.path()), 1);
}

#[test]
fn resonant_problem_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let args = small("solve", &fixture("counterexample.json"));
    assert_eq!(code(&refs(&args), dir.path()), 2);
}

#[test]
fn iteration_cap_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = small("solve", &fixture("manufactured_first_order.json"));
    args.extend(["--max-iter".into(), "1".into()]);
    assert_eq!(code(&refs(&args), dir.path()), 3);
}

#[test]
fn failed_identity_exits_with_four() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["identities", "--nt", "8", "--nx", "8", "--fields", "1"];
    assert_eq!(code(&args, dir.path()), 4);
    assert!(dir.path().join("identities.json").exists());
}

#[test]
fn check_nonres_reports_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let args = small("check-nonres", &fixture("hale_undamped.json"));
    assert_eq!(code(&refs(&args), dir.path()), 0);
    let text = std::fs::read_to_string(dir.path().join("nonresonance.json")).unwrap();
    assert!(text.contains("violated") || text.contains("Violated"), "{text}");
}

#[test]
fn eigen_and_counterexample_run() {
    let dir = tempfile::tempdir().unwrap();
    let eigen = fixture("eigen.json");
    assert_eq!(code(&["eigen", "--problem", eigen.to_str().unwrap(), "--k-max", "2"], dir.path()), 0);
    assert!(dir.path().join("eigen.json").exists());
    assert_eq!(code(&["counterexample", "--nt", "64", "--nx", "20"], dir.path()), 0);
    assert!(dir.path().join("fourier.csv").exists());
}
