//! End-to-end checks of the `scalelab` binary: exit codes, file outputs,
//! and byte-level determinism of repeated runs.

use std::path::Path;
use std::process::{Command, Output};

fn scalelab(args: &[&str], workdir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_scalelab"))
        .args(args)
        .current_dir(workdir)
        .output()
        .expect("binary runs")
}

const SMALL_CFG: &str = "\
# quick smoke configuration
epsilon = 0.1
s_max = 0.4
ds = 0.02
grid_n = 16
n_modes = 16
ensemble = 6
seed = 31
output_every = 0.2
output_dir = out
";

#[test]
fn missing_config_exits_2_and_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = scalelab(&["simulate", "--config", "no-such-file.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no-such-file.cfg"), "{stderr}");
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.cfg"), "epsiln = 0.1\n").unwrap();
    let out = scalelab(&["simulate", "--config", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("epsiln"));
}

#[test]
fn usage_error_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = scalelab(&["no-such-subcommand"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_twice_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.cfg"), SMALL_CFG).unwrap();

    let run = |out_dir: &str| {
        let out = scalelab(
            &["simulate", "--config", "small.cfg", "--seed", "42", "--out", out_dir],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        std::fs::read(dir.path().join(out_dir).join("trajectory.csv")).unwrap()
    };
    let a = run("out_a");
    let b = run("out_b");
    assert_eq!(a, b, "repeated runs must produce identical bytes");
    assert!(!a.is_empty());

    // a different seed must change the data
    let out = scalelab(
        &["simulate", "--config", "small.cfg", "--seed", "43", "--out", "out_c"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let c = std::fs::read(dir.path().join("out_c/trajectory.csv")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn worker_count_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.cfg"), SMALL_CFG).unwrap();
    let run = |threads: &str, out_dir: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_scalelab"))
            .args(["simulate", "--config", "small.cfg", "--out", out_dir])
            .env("RAYON_NUM_THREADS", threads)
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
        std::fs::read(dir.path().join(out_dir).join("trajectory.csv")).unwrap()
    };
    assert_eq!(run("1", "w1"), run("4", "w4"));
}

#[test]
fn reference_emits_curves_csv() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.cfg"), SMALL_CFG).unwrap();
    let out = scalelab(&["reference", "--config", "small.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let csv = std::fs::read_to_string(dir.path().join("out/reference.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next().unwrap(), "s,value,kind,epsilon");
    assert!(csv.contains("PHI2_EXACT"));
    assert!(csv.contains("SIGMA2_BOUND"));
    assert!(csv.contains("PHI4_BOUND"));
    assert!(csv.contains("F2_BOUND"));
}

#[test]
fn report_passes_on_consistent_run_and_fails_on_mismatched_trajectory() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = "\
epsilon = 0.1
s_max = 0.4
ds = 0.01
grid_n = 16
n_modes = 32
ensemble = 24
seed = 7
output_every = 0.2
output_dir = out
";
    std::fs::write(dir.path().join("small.cfg"), cfg).unwrap();
    let out = scalelab(&["report", "--config", "small.cfg"], dir.path());
    assert_eq!(
        out.status.code(),
        Some(0),
        "stdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(dir.path().join("out/report.txt").exists());

    // feed the epsilon = 0.1 trajectory to an epsilon = 0.2 oracle
    let mismatched = "\
epsilon = 0.2
s_max = 0.4
ds = 0.01
grid_n = 16
n_modes = 32
ensemble = 24
seed = 7
output_every = 0.2
output_dir = out2
";
    std::fs::write(dir.path().join("mismatch.cfg"), mismatched).unwrap();
    let out = scalelab(
        &[
            "report",
            "--config",
            "mismatch.cfg",
            "--trajectory",
            "out/trajectory.csv",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL"), "{stdout}");
}
