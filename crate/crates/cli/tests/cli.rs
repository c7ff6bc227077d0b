use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn rbvi(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rbvi"))
        .arg("--out-dir")
        .arg(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

#[test]
fn offline_then_online_with_truth() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbvi(dir.path(), &["--resolution", "40", "--snapshots", "5", "offline"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(dir.path().join("offline.rbvi").exists());
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "offline");
    assert_eq!(manifest["details"]["n_v"], 6);

    let out = rbvi(dir.path(), &["online", "--mu", "0.0055", "--with-truth"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let res: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let bound = res["primal_dual_bound"]["delta_u"].as_f64().unwrap();
    let err = res["truth"]["err_u_du"].as_f64().unwrap();
    assert!(bound >= err && err > 0.0);
    assert_eq!(res["truth"]["bound_violations"], 0);
}

#[test]
fn snapshot_query_reproduces_the_truth() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rbvi(dir.path(), &["--resolution", "40", "--snapshots", "3", "offline"])), 0);
    let out = rbvi(dir.path(), &["online", "--mu", "0.0055", "--with-truth"]);
    let res: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rel = res["truth"]["err_u_du"].as_f64().unwrap() / res["truth"]["u_norm"].as_f64().unwrap();
    assert!(rel <= 1e-8, "{rel:e}");
}

#[test]
fn validation_errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&rbvi(dir.path(), &["--snapshots", "0", "offline"])), 1);
    assert_eq!(code(&rbvi(dir.path(), &["--set", "colour=red", "offline"])), 1);
    assert_eq!(code(&rbvi(dir.path(), &["--model", "3", "offline"])), 1);
    assert_eq!(code(&rbvi(dir.path(), &["--resolution", "40", "--snapshots", "2", "offline"])), 0);
    let out = rbvi(dir.path(), &["online", "--mu", "0.5"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside the parameter box"));
    fs::write(dir.path().join("offline.rbvi"), b"not an artifact").unwrap();
    assert_eq!(code(&rbvi(dir.path(), &["online", "--mu", "0.005"])), 1);
}

#[test]
fn config_file_and_overrides_combine() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    fs::write(&cfg, "model = 2\nresolution = 8x8  # coarse\nsnapshots = 3\n").unwrap();
    let out = rbvi(dir.path(), &["--config", cfg.to_str().unwrap(), "--set", "snapshots=4", "offline"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["model"], "2");
    assert_eq!(manifest["config"]["snapshots"], "4");
    assert_eq!(manifest["details"]["n_truth"], 49);
}

#[test]
fn sweep_is_deterministic_and_valid() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["--resolution", "40", "--snapshots", "4", "--test-samples", "12", "sweep", "--details"];
    assert_eq!(code(&rbvi(a.path(), &args)), 0);
    assert_eq!(code(&rbvi(b.path(), &args)), 0);
    let csv = fs::read(a.path().join("sweep.csv")).unwrap();
    assert_eq!(csv, fs::read(b.path().join("sweep.csv")).unwrap());
    let text = String::from_utf8(csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "n,err_u_pr,bnd_u_pr,err_u_prdu,bnd_u_prdu,err_l,bnd_l_pr,bnd_l_prdu,n_v,n_q,n_s"
    );
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|x| x.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    for r in &rows {
        assert!(r[2] >= r[1] && r[4] >= r[3] && r[6] >= r[5] && r[7] >= r[5]);
    }
    assert_eq!(fs::read_to_string(a.path().join("sweep_details.csv")).unwrap().lines().count(), 1 + 3 * 12);
}

#[test]
fn single_snapshot_sweep_has_one_row() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbvi(dir.path(), &["--resolution", "40", "--snapshots", "1", "--test-samples", "5", "sweep"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert!(text.lines().nth(1).unwrap().starts_with("1,"));
}

#[test]
fn timing_with_one_repetition_warns_and_runs() {
    let dir = tempfile::tempdir().unwrap();
    let out = rbvi(
        dir.path(),
        &["--model", "2", "--resolution", "8x8", "--snapshots", "3", "--test-samples", "4", "--reps", "1", "--set", "timing_resolutions=8x8,12x12", "timing", "--mesh-n", "2"],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("single repetition"));
    let mesh = fs::read_to_string(dir.path().join("timing_mesh.csv")).unwrap();
    assert_eq!(mesh.lines().count(), 3);
    assert_eq!(fs::read_to_string(dir.path().join("timing.csv")).unwrap().lines().count(), 3);
}

#[test]
fn verify_passes_and_detects_faults() {
    let dir = tempfile::tempdir().unwrap();
    let base = ["--model", "2", "--resolution", "12x12", "--snapshots", "5", "--test-samples", "10"];
    let out = rbvi(dir.path(), &[&base[..], &["verify"]].concat());
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    assert_eq!(String::from_utf8_lossy(&out.stdout).lines().filter(|l| l.starts_with("PASS")).count(), 7);

    let out = rbvi(dir.path(), &[&base[..], &["verify", "--corrupt-gramian"]].concat());
    assert_eq!(code(&out), 3);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("FAIL residual_consistency"));
    assert!(stdout.contains("PASS reproduction"));

    let out = rbvi(dir.path(), &[&base[..], &["--set", "tolerance_scale=0", "verify"]].concat());
    assert_eq!(code(&out), 3);
}
