//! End-to-end checks of the command-line interface: flags, exit codes and
//! CSV emission.

use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fs-qtt"))
}

#[test]
fn solve_emits_csv_and_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run.csv");
    let status = bin()
        .args([
            "solve",
            "--problem",
            "constant-rhs",
            "--profile",
            "B",
            "--d",
            "4",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("solver,problem,d,"));
    assert!(csv.contains("fs-qtt,constant-rhs,4,"));
}

#[test]
fn usage_errors_exit_with_one() {
    let status = bin().args(["solve", "--problem", "bogus", "--d", "3"]).status().unwrap();
    assert_eq!(status.code(), Some(1));

    let status = bin().args(["frobnicate"]).status().unwrap();
    assert_eq!(status.code(), Some(1));

    // fd-dense beyond its cap is rejected before any solve
    let status = bin()
        .args(["solve", "--problem", "constant-rhs", "--solver", "fd-dense", "--d", "9"])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(1));
}

#[test]
fn equivalence_check_passes_at_small_factor() {
    let output = bin()
        .args(["equivalence-check", "--problem", "analytic", "--d", "2"])
        .output()
        .unwrap();
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(output.status.success(), "stdout: {stdout}");
    assert!(stdout.contains("PASS"), "stdout: {stdout}");
}

#[test]
fn convergence_sweep_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sweep.csv");
    let status = bin()
        .args([
            "convergence",
            "--problem",
            "constant-rhs",
            "--profile",
            "B",
            "--d-min",
            "3",
            "--d-max",
            "4",
            "--out",
        ])
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    assert_eq!(std::fs::read_to_string(&out).unwrap().lines().count(), 3);
}

#[test]
fn ranks_sweep_prints_table() {
    let output = bin()
        .args(["ranks", "--problem", "constant-rhs", "--profile", "B", "--d-min", "3", "--d-max", "3"])
        .output()
        .unwrap();
    assert!(output.status.success());
    let stdout = String::from_utf8_lossy(&output.stdout);
    assert!(stdout.contains("K_x^-1"), "stdout: {stdout}");
}
