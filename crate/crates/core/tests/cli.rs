use std::path::Path;
use std::process::Command;

use ota_dp::harness::{read_results, OptimizeReport, TrainReport};
use ota_dp::model::SystemConfig;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ota-dp"))
}

fn small_config(dir: &Path) -> std::path::PathBuf {
    let mut cfg = SystemConfig::reference();
    cfg.num_devices = 3;
    cfg.num_antennas = 4;
    cfg.model_dim = 5;
    cfg.rounds = 6;
    cfg.samples_per_device = vec![20; 3];
    cfg.set_uniform_epsilon(10.0);
    cfg.dp_delta = vec![1e-3; 3];
    cfg.outer_iters = 2;
    cfg.mm_iters = 10;
    let path = dir.join("config.json");
    std::fs::write(&path, cfg.to_json().unwrap()).unwrap();
    path
}

#[test]
fn init_config_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("default.json");
    let status = bin().args(["init-config", "--out"]).arg(&out).status().unwrap();
    assert!(status.success());
    let cfg = SystemConfig::from_json(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(cfg, SystemConfig::reference());
}

#[test]
fn optimize_then_train() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let design = dir.path().join("design.json");
    let status = bin().arg("optimize").arg("--config").arg(&config).arg("--out").arg(&design).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let report: OptimizeReport = serde_json::from_str(&std::fs::read_to_string(&design).unwrap()).unwrap();
    assert!(report.feasible);

    let out = dir.path().join("train.json");
    let traj = dir.path().join("traj.csv");
    let status = bin()
        .arg("train")
        .args(["--config".as_ref(), config.as_os_str()])
        .args(["--design".as_ref(), design.as_os_str()])
        .args(["--out".as_ref(), out.as_os_str()])
        .args(["--trajectory".as_ref(), traj.as_os_str()])
        .status()
        .unwrap();
    assert_eq!(status.code(), Some(0));
    let trained: TrainReport = serde_json::from_str(&std::fs::read_to_string(out).unwrap()).unwrap();
    assert_eq!(trained.result.loss_trajectory.len(), 7);
    let csv = std::fs::read_to_string(traj).unwrap();
    assert_eq!(csv.lines().next(), Some("round,loss,gap"));
    assert_eq!(csv.lines().count(), 8);
}

#[test]
fn experiment_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path());
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = bin()
            .args(["experiment", "--figure", "gap_vs_snr", "--trials", "2", "--seed", "5"])
            .args(["--schemes", "mimo_dp,miso_nodp", "--sweep", "10,20"])
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .status()
            .unwrap();
        assert_eq!(status.code(), Some(0));
        std::fs::read(out).unwrap()
    };
    let a = run("a.csv");
    assert_eq!(a, run("b.csv"));
    let rows = read_results(&a[..]).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 2);

    let summary = dir.path().join("summary.csv");
    let status =
        bin().arg("summarize").arg("--in").arg(dir.path().join("a.csv")).arg("--out").arg(&summary).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let text = std::fs::read_to_string(summary).unwrap();
    assert!(text.starts_with("scheme,sweep_name,sweep_value,trials,feasible,gap_mean,gap_se,eps_bs_mean,eps_bs_se\n"));
    assert_eq!(text.lines().count(), 5);
}

#[test]
fn errors_exit_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    std::fs::write(&bad, "a,b\n1,2\n").unwrap();
    let status =
        bin().arg("summarize").arg("--in").arg(&bad).arg("--out").arg(dir.path().join("s.csv")).status().unwrap();
    assert_eq!(status.code(), Some(1));

    let cfg = dir.path().join("cfg.json");
    std::fs::write(&cfg, "{\"num_devices\": 0}").unwrap();
    let status =
        bin().arg("optimize").arg("--config").arg(&cfg).arg("--out").arg(dir.path().join("o.json")).status().unwrap();
    assert_eq!(status.code(), Some(1));
}
