use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &[&str] = &[
    "n=6",
    "l_transient=200",
    "l_train=600",
    "l_validation=200",
    "l_test=300",
    "warmup=100",
    "lyapunov=false",
    "tau_max=10",
    "t_window=100",
    "t0=50",
];

fn vrc(args: &[&str], out: &Path) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_vrc"));
    cmd.args(args).arg("--out").arg(out);
    for kv in SMALL {
        cmd.args(["--set", kv]);
    }
    cmd.output().expect("run vrc")
}

fn ok(args: &[&str], out: &Path) -> String {
    let o = vrc(args, out);
    assert!(o.status.success(), "vrc {args:?} failed: {}", String::from_utf8_lossy(&o.stderr));
    String::from_utf8(o.stdout).unwrap()
}

fn header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn generate_writes_timeseries() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["generate"], dir.path());
    assert_eq!(header(&dir.path().join("timeseries.csv")), "t,ch1,ch2,ch3");
    let cfg = fs::read_to_string(dir.path().join("config.txt")).unwrap();
    assert!(cfg.lines().any(|l| l == "n=6"));
}

#[test]
fn train_then_predict() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["train", "--seed", "3"], dir.path());
    assert!(stdout.contains("train_nrmse="));
    assert_eq!(header(&dir.path().join("report.csv")), "metric,value");
    for f in ["report.json", "readout.csv", "truth.csv", "prediction.csv"] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("report.json")).unwrap()).unwrap();
    assert_eq!(json["config"]["seed"], 3);

    let pred_dir = tempfile::tempdir().unwrap();
    let readout = dir.path().join("readout.csv");
    ok(&["predict", "--seed", "3", "--steps", "50", "--readout", readout.to_str().unwrap()], pred_dir.path());
    let pred = fs::read_to_string(pred_dir.path().join("prediction.csv")).unwrap();
    assert_eq!(pred.lines().next().unwrap(), "t,ch1,ch2,ch3");
    assert!(pred.lines().count() <= 51);
}

#[test]
fn train_is_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    ok(&["train", "--seed", "9"], a.path());
    ok(&["train", "--seed", "9"], b.path());
    for f in ["report.csv", "prediction.csv", "readout.csv"] {
        // Wall time is the only field allowed to differ.
        let read = |d: &Path| -> String {
            fs::read_to_string(d.join(f)).unwrap().lines().filter(|l| !l.starts_with("wall_time")).collect()
        };
        let (x, y) = (read(a.path()), read(b.path()));
        assert_eq!(x, y, "{f} differs between identical runs");
    }
}

#[test]
fn memory_writes_curves() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["memory", "--trials", "3", "--jobs", "1"], dir.path());
    assert!(stdout.contains("mc_mean="));
    let curve = fs::read_to_string(dir.path().join("memory.csv")).unwrap();
    assert_eq!(curve.lines().next().unwrap(), "tau,mf_mean,mf_std");
    assert_eq!(curve.lines().count(), 1 + 11);
    let trials = fs::read_to_string(dir.path().join("memory_trials.csv")).unwrap();
    assert_eq!(trials.lines().count(), 1 + 3 * 11);
}

#[test]
fn sweep_writes_blocks() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["sweep", "--sizes", "4,6", "--trials", "2", "--jobs", "1"], dir.path());
    let csv = fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "n,metric,mean,std,n_divergent");
    assert!(csv.lines().any(|l| l.starts_with("4,val_nrmse,")));
    assert!(csv.lines().any(|l| l.starts_with("6,val_nrmse,")));
}

#[test]
fn search_writes_best_config() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["search", "--budget", "2"], dir.path());
    let csv = fs::read_to_string(dir.path().join("search.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "gamma,rho,lambda,density,val_nrmse");
    assert!(csv.lines().count() >= 2);
    assert!(dir.path().join("best_config.txt").exists());
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.txt");
    fs::write(&cfg, "# small run\nsystem=lorenz\ntopology=uncoupled\nrho=0.4\n").unwrap();
    ok(&["generate", "--config", cfg.to_str().unwrap(), "--seed", "5"], dir.path());
    let written = fs::read_to_string(dir.path().join("config.txt")).unwrap();
    assert!(written.lines().any(|l| l == "topology=uncoupled"));
    assert!(written.lines().any(|l| l == "rho=0.4"));
    assert!(written.lines().any(|l| l == "seed=5"));
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let o = vrc(&["train", "--set", "rho"], dir.path());
    assert!(!o.status.success());
    let o = vrc(&["train", "--set", "no_such_key=1"], dir.path());
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_key"));
}
