use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_xlstm-pinn"));
    c.env_remove("XLSTM_PINN_OUT");
    c
}

fn run(args: &[&str], out: &Path) -> Output {
    bin().args(args).arg("--out").arg(out).output().expect("spawn")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn paired_smoke_run_writes_four_metric_rows() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--problem", "advection1d", "--paired", "--seed", "7", "--budget", "2"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let root = dir.path().join("runs/advection1d");
    let csv = std::fs::read_to_string(root.join("metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5, "{csv}");
    let validation = csv.lines().filter(|l| l.contains("cartesian")).count();
    assert_eq!(validation, 2);
    for f in ["xlstm-pinn/loss.svg", "pinn/loss.svg", "xlstm-pinn/fields.svg", "loss.svg", "fields.svg", "config.json"] {
        assert!(root.join(f).is_file(), "{f}");
    }
}

#[test]
fn unknown_problem_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--problem", "nosuch"], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("usage"), "{}", stderr(&o));
}

#[test]
fn bad_flag_is_a_usage_error() {
    let o = bin().args(["train", "--budgett", "3"]).output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn budget_of_one_gives_one_history_entry() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--problem", "laplace2d", "--budget", "1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let h: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("runs/laplace2d/xlstm-pinn/history.json")).unwrap()).unwrap();
    assert_eq!(h["run"]["history"].as_array().unwrap().len(), 1);
    assert!(!dir.path().join("runs/laplace2d/pinn").exists());
}

#[test]
fn config_snapshot_replays_bit_for_bit() {
    let first = tempfile::tempdir().unwrap();
    let o = run(&["train", "--problem", "disk-robin", "--model", "pinn", "--budget", "3", "--seed", "4"], first.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let snapshot = first.path().join("runs/disk-robin/config.json");
    let second = tempfile::tempdir().unwrap();
    let o = run(&["train", "--config", snapshot.to_str().unwrap()], second.path());
    assert!(o.status.success(), "{}", stderr(&o));
    for f in ["pinn/params.ckpt", "metrics.csv", "pinn/metrics.csv"] {
        let a = std::fs::read(first.path().join("runs/disk-robin").join(f)).unwrap();
        let b = std::fs::read(second.path().join("runs/disk-robin").join(f)).unwrap();
        assert_eq!(a, b, "{f}");
    }
}

#[test]
fn output_root_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .env("XLSTM_PINN_OUT", dir.path())
        .args(["kernel-probe", "--kmax", "3", "--width", "4", "--samples", "32"])
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("spectral/kernel.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn single_mode_spectral_report() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("spectral.json");
    let json = serde_json::json!({
        "frequency": {
            "model": { "architecture": "xlstm", "input_dim": 1, "blocks": 1, "width": 8, "micro_steps": 1 },
            "seeds": [1],
            "train": { "iterations": 5 },
            "points": 64
        },
        "kernel": { "width": 4, "samples": 32 }
    });
    std::fs::write(&cfg, json.to_string()).unwrap();
    let o = run(&["spectral", "--config", cfg.to_str().unwrap(), "--kmax", "1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("spectral/report.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.contains("k_star_base") && header.contains("k_star_xlstm"));
    assert_eq!(lines.count(), 1);
    assert!(dir.path().join("spectral/spectrum.svg").is_file());
}

#[test]
fn verify_filters_suites() {
    let dir = tempfile::tempdir().unwrap();
    let summary = dir.path().join("summary.json");
    let o = bin().args(["verify", "--only", "modal", "--summary", summary.to_str().unwrap()]).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let s: serde_json::Value = serde_json::from_slice(&std::fs::read(summary).unwrap()).unwrap();
    let checks = s["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 1);
    assert_eq!(checks[0]["suite"], "modal");
    assert_eq!(s["passed"], true);
}

#[test]
fn corrupted_checkpoint_is_a_load_failure() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("broken.ckpt");
    std::fs::write(&bad, b"not a checkpoint").unwrap();
    let o = bin().args(["verify", "--only", "checkpoint", "--checkpoint", bad.to_str().unwrap()]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    let s: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["checks"][0]["status"], "load-failure");
}

#[test]
fn trained_checkpoint_passes_the_checkpoint_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["train", "--problem", "poisson-beam", "--budget", "1"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let ckpt = dir.path().join("runs/poisson-beam/xlstm-pinn/params.ckpt");
    let o = bin().args(["verify", "--only", "checkpoint", "--checkpoint", ckpt.to_str().unwrap()]).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let s: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(s["checks"][0]["status"], "pass");
}

#[test]
fn report_collects_run_tables() {
    let dir = tempfile::tempdir().unwrap();
    assert!(run(&["train", "--problem", "laplace2d", "--budget", "1"], dir.path()).status.success());
    let o = bin().args(["report", "--out", dir.path().to_str().unwrap()]).output().unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("report/metrics.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
