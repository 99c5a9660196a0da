use std::path::Path;
use std::process::{Command, Output};

fn dcac(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dcac")).args(args).output().expect("binary runs")
}

fn body(path: &Path) -> String {
    let text = std::fs::read_to_string(path).unwrap();
    text.lines().filter(|l| !l.starts_with('#')).collect::<Vec<_>>().join("\n")
}

#[test]
fn nominal_run_writes_one_row_per_combination() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcac(&["--case", "case30", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert!(lines[0].starts_with("# version="));
    assert_eq!(lines.len(), 2 + 16);
    assert!(dir.path().join("summary.csv").exists());
}

#[test]
fn worker_count_does_not_change_results() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let common = ["--case", "case30", "--dc", "base,lllf", "--ac", "base,spf", "--samples", "6", "--seed", "9", "--no-timing"];
    for (dir, workers) in [(&a, "1"), (&b, "4")] {
        let mut args = common.to_vec();
        args.extend(["--workers", workers, "--out", dir.path().to_str().unwrap()]);
        assert!(dcac(&args).status.code().unwrap() != 1);
    }
    assert_eq!(body(&a.path().join("records.csv")), body(&b.path().join("records.csv")));
    assert_eq!(body(&a.path().join("summary.csv")), body(&b.path().join("summary.csv")));
}

#[test]
fn json_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcac(&["--case", "case30", "--dc", "base", "--ac", "spf", "--format", "json", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("records.json")).unwrap();
    assert!(text.contains("\"metadata\""));
    assert!(text.contains("\"AC_SPF\""));
}

#[test]
fn non_convergence_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcac(&["--case", "case30", "--dc", "base", "--ac", "base", "--max-inner", "1", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ac stage"));
}

#[test]
fn unreadable_case_is_fatal() {
    let dir = tempfile::tempdir().unwrap();
    let out = dcac(&["--case", "/nonexistent/case.m", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("parse stage"));
}

#[test]
fn bad_arguments_are_fatal() {
    assert_eq!(dcac(&["--case", "case30", "--dc", "quadratic"]).status.code(), Some(1));
    assert_eq!(dcac(&["--case", "case30", "--pf-min", "1.2", "--samples", "2"]).status.code(), Some(1));
    assert_eq!(dcac(&["--help"]).status.code(), Some(0));
}

#[test]
fn reference_enables_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let reference = dir.path().join("ref.json");
    std::fs::write(&reference, dcac_core::fixtures::CASE118_ACOPF_REFERENCE).unwrap();
    let out = dcac(&[
        "--case", "case118", "--dc", "base", "--ac", "spf", "--ref", reference.to_str().unwrap(),
        "--out", dir.path().to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(dir.path().join("records.csv")).unwrap();
    let mut rows = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(text.as_bytes());
    let header = rows.headers().unwrap().clone();
    let row = rows.records().next().unwrap().unwrap();
    let mae: f64 = row[header.iter().position(|h| h == "mae").unwrap()].parse().unwrap();
    assert!(mae > 0.0 && mae < 1.0);
}
