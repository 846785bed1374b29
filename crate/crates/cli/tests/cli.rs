use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn repo(rel: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_microdispatch"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn config(dir: &Path, extra: &str) -> PathBuf {
    let text = format!(
        "seed = 5\n\
         [paths]\n\
         network = {:?}\n\
         timeseries = {:?}\n\
         out_dir = \"out\"\n\
         [run]\n\
         epochs = 3\n\
         evaluate_gap = false\n\
         {extra}",
        repo("cases/mg10.case"),
        repo("data/mg10_day.csv"),
    );
    let path = dir.join("run.toml");
    fs::write(&path, text).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn opf_sample_converges() {
    let out = bin(&["opf", s(&repo("cases/mg10_problem.toml"))]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("converged = true"), "{text}");
}

#[test]
fn malformed_input_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "network = 3\n[problem\n").unwrap();
    let out = bin(&["opf", s(&bad)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    assert_eq!(bin(&["train"]).status.code(), Some(2));
    assert_eq!(bin(&["train", "--config", "/nonexistent.toml"]).status.code(), Some(2));
}

#[test]
fn infeasible_opf_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let text = fs::read_to_string(repo("cases/mg10_problem.toml"))
        .unwrap()
        .replace("network = \"mg10.case\"", &format!("network = {:?}", repo("cases/mg10.case")))
        .replace("commitment = [true, true]\nprev", "commitment = [false, false]\nprev")
        .replace("d = 80.0", "d = 200.0");
    let path = dir.path().join("p.toml");
    fs::write(&path, text).unwrap();
    let out = bin(&["opf", s(&path)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn zero_epochs_writes_an_initial_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let out = bin(&["train", "--config", s(&cfg), "--out", s(&dir.path().join("z"))]);
    assert!(out.status.success());
    let cfg0 = dir.path().join("zero.toml");
    fs::write(&cfg0, fs::read_to_string(&cfg).unwrap().replace("epochs = 3", "epochs = 0")).unwrap();
    let out = bin(&["train", "--config", s(&cfg0)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let metrics = fs::read_to_string(dir.path().join("out/metrics.csv")).unwrap();
    assert_eq!(metrics, "epoch,cumulative_reward,test_expected_cost\n");
    assert!(dir.path().join("out/checkpoint.bin").is_file());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    let mut seen = Vec::new();
    for _ in 0..2 {
        assert!(bin(&["train", "--config", s(&cfg)]).status.success());
        assert!(bin(&["evaluate", "--config", s(&cfg)]).status.success());
        let read = |f: &str| fs::read(dir.path().join("out").join(f)).unwrap();
        seen.push((read("checkpoint.bin"), read("metrics.csv"), read("results.csv"), read("dispatch/scenario_000.csv")));
    }
    assert!(seen[0] == seen[1]);
    let metrics = String::from_utf8(seen[0].1.clone()).unwrap();
    assert_eq!(metrics.lines().count(), 4);
}

#[test]
fn empty_test_set_gives_header_only_results() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "[scenario]\nmode = \"stochastic\"\nn_train = 3\nn_test = 0\nn_validation = 0\n");
    let out = bin(&["train", "--config", s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = bin(&["evaluate", "--config", s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let results = fs::read_to_string(dir.path().join("out/results.csv")).unwrap();
    assert_eq!(results, "scenario,policy,total_cost,gap,avg_decision_ms\n");
}

#[test]
fn checkpoint_from_another_window_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "");
    assert!(bin(&["train", "--config", s(&cfg)]).status.success());
    let other = dir.path().join("w4.toml");
    fs::write(&other, fs::read_to_string(&cfg).unwrap() + "[agent]\nwindow = 4\n").unwrap();
    let out = bin(&["evaluate", "--config", s(&other)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("scenario mismatch"));
}

#[test]
fn gen_scenarios_writes_both_archives() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), "[scenario]\nmode = \"stochastic\"\nn_train = 4\nn_test = 2\n");
    let out = bin(&["gen-scenarios", "--config", s(&cfg)]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["scenarios_train.json", "scenarios_test.json"] {
        assert!(dir.path().join("out").join(f).is_file());
    }
}
