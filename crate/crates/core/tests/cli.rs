use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_dppsgd"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn dppsgd")
}

fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

const VARIANCE: &str = "\
kind = variance-study
dataset = synthetic
n = 150
d = 2
noise_sd = 0
kernel_space = features
batch_sizes = 4,8,16
replicates = 20
seed = 3
";

const SGD: &str = "\
kind = sgd-run
dataset = synthetic
n = 120
d = 3
batch_sizes = 4
replicates = 3
budget = 80
record_every = 5
";

fn fixture(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name).display().to_string()
}

#[test]
fn variance_reports_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "v.cfg", VARIANCE);
    let (a, b) = (dir.path().join("a.csv"), dir.path().join("b.csv"));
    for out in [&a, &b] {
        let o = run(&["variance-study", "--config", cfg.to_str().unwrap(), "--seed", "42", "--out", out.to_str().unwrap()]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert!(text.contains("# seed=42"));
    assert!(text.contains("# version="));
    assert!(text.lines().any(|l| l.starts_with("estimator,p,replicates,trace_cov")));
    let timing = fs::read_to_string(dir.path().join("a.csv.timing.json")).unwrap();
    assert!(timing.contains("wall_clock_seconds"));
}

#[test]
fn seed_changes_the_report() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "v.cfg", VARIANCE);
    let a = run(&["variance-study", "--config", cfg.to_str().unwrap(), "--seed", "1"]);
    let b = run(&["variance-study", "--config", cfg.to_str().unwrap(), "--seed", "2"]);
    assert!(a.status.success() && b.status.success());
    assert_ne!(a.stdout, b.stdout);
}

#[test]
fn sgd_run_json_and_trajectories() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "s.cfg", SGD);
    let traj = dir.path().join("t.csv");
    let o = run(&["sgd-run", "--config", cfg.to_str().unwrap(), "--format", "json", "--trajectories", traj.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["metadata"]["command"], "sgd-run");
    assert_eq!(v["report"]["curves"].as_array().unwrap().len(), 2);
    let rows = fs::read_to_string(traj).unwrap();
    let data: Vec<&str> = rows.lines().filter(|l| !l.starts_with('#')).collect();
    assert!(data[0].starts_with("estimator,p,replicate,t,budget"));
    // 2 estimators x 3 replicates x (t = 0, 5, ..., 20)
    assert_eq!(data.len() - 1, 2 * 3 * 5);
}

#[test]
fn kernel_build_then_sample() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "s.cfg", SGD);
    let kernel = dir.path().join("k.txt");
    let o = run(&["kernel-build", "--config", cfg.to_str().unwrap(), "--p", "6", "--out", kernel.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(&["sample", "--kernel", kernel.to_str().unwrap(), "--count", "25", "--seed", "9"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    assert_eq!(text.lines().count(), 25);
    for line in text.lines() {
        let mut idx: Vec<usize> = line.split(' ').map(|s| s.parse().unwrap()).collect();
        idx.dedup();
        assert_eq!(idx.len(), 6);
        assert!(idx.iter().all(|&i| i < 120));
    }
    let again = run(&["sample", "--kernel", kernel.to_str().unwrap(), "--count", "25", "--seed", "9"]);
    assert_eq!(text.as_bytes(), &again.stdout[..]);
}

#[test]
fn libsvm_pipeline_from_config() {
    let dir = TempDir::new().unwrap();
    let body = format!(
        "kind = sgd-run\ndataset = libsvm\ntrain = {}\ntest = {}\nbinarize = letter\nloss = logistic\n\
         kernel_space = features\nlambda0 = 0.01\nbatch_sizes = 5\nreplicates = 2\nbudget = 100\nrecord_every = 10\n",
        fixture("letter_mini.scale"),
        fixture("letter_mini.scale.t")
    );
    let cfg = write_config(dir.path(), "l.cfg", &body);
    let o = run(&["sgd-run", "--config", cfg.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let text = String::from_utf8(o.stdout).unwrap();
    let last = text.lines().last().unwrap();
    let test_err: f64 = last.split(',').nth(10).unwrap().parse().unwrap();
    assert!((0.0..=1.0).contains(&test_err));
}

#[test]
fn missing_config_fails() {
    let o = run(&["variance-study", "--config", "/nonexistent/dir/none.cfg"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
    assert!(o.stdout.is_empty());
}

#[test]
fn unknown_flag_and_subcommand_print_usage() {
    for args in [&["variance-study", "--bogus"][..], &["frobnicate"][..]] {
        let o = run(args);
        assert!(!o.status.success());
        assert!(String::from_utf8_lossy(&o.stderr).contains("Usage"));
    }
}

#[test]
fn unknown_config_key_is_rejected() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), "bad.cfg", "kind = sgd-run\nbatchsize = 4\n");
    let o = run(&["sgd-run", "--config", cfg.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("batchsize"));
}

#[test]
fn version_carries_describe_suffix() {
    let o = run(&["--version"]);
    let v = String::from_utf8(o.stdout).unwrap();
    assert!(v.starts_with("dppsgd 0.1.0+"), "{v}");
}
