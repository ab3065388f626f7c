use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use qnopt::bench::{RunConfig, Summary, DATA_DIR_ENV};

fn qnbench(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qnbench"))
        .args(args)
        .env_remove(DATA_DIR_ENV)
        .output()
        .expect("binary runs")
}

fn out_arg(dir: &Path) -> String {
    dir.display().to_string()
}

#[test]
fn run_writes_artifacts_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = out_arg(dir.path());
    let o = qnbench(&["run", "--task", "rosenbrock", "--method", "ls-lbfgs", "--out", &out]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let summary = Summary::from_json(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(summary.converged);
    assert_eq!(Summary::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap(), summary);
    let records = fs::read_to_string(dir.path().join("records.csv")).unwrap();
    assert_eq!(records.lines().count(), summary.iterations + 1);
    assert!(records.starts_with("iter,loss,grad_norm,step_param,rho,accepted,fevals,gevals,wall_ms\n"));
}

#[test]
fn config_echo_reproduces_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let o = qnbench(&["run", "--task", "logistic", "--method", "ls-lbfgs", "--b", "100", "--max-iters", "20", "--out", &out_arg(&first)]);
    assert!(matches!(o.status.code(), Some(0 | 4)));
    let echo = first.join("config.echo");
    let second = dir.path().join("second");
    let o = qnbench(&["run", "--config", &out_arg(&echo), "--out", &out_arg(&second)]);
    assert!(matches!(o.status.code(), Some(0 | 4)));
    for f in ["records.csv", "config.echo"] {
        assert_eq!(fs::read(first.join(f)).unwrap(), fs::read(second.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn flags_override_the_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "task = \"quadratic\"\nmethod = \"sgd\"\nlr = 0.01\nmax-iters = 7\n").unwrap();
    let out = dir.path().join("out");
    let o = qnbench(&["run", "--config", &out_arg(&cfg), "--max-iters", "3", "--out", &out_arg(&out)]);
    assert_eq!(o.status.code(), Some(4));
    let echo = RunConfig::from_toml(&fs::read_to_string(out.join("config.echo")).unwrap()).unwrap();
    assert_eq!((echo.max_iters, echo.lr), (3, Some(0.01)));
    assert_eq!(fs::read_to_string(out.join("records.csv")).unwrap().lines().count(), 4);
}

#[test]
fn malformed_config_exits_2_without_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    let out = dir.path().join("out");
    for text in ["task = \"quadratic\"\nmethod = \"sgd\"\n", "task = \"quadratic\"\nmethod = \"ls-lbfgs\"\nm = 0\n", "this is not toml", "task = \"quadratic\"\nmethod = \"sgd\"\nlr = 0.1\nbogus = 1\n"] {
        fs::write(&cfg, text).unwrap();
        let o = qnbench(&["run", "--config", &out_arg(&cfg), "--out", &out_arg(&out)]);
        assert_eq!(o.status.code(), Some(2), "{text}: {}", String::from_utf8_lossy(&o.stderr));
        assert!(!out.join("records.csv").exists());
    }
}

#[test]
fn unknown_flag_value_exits_2() {
    let o = qnbench(&["run", "--task", "imagenet", "--method", "sgd"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_data_dir_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = qnbench(&["run", "--task", "mnist", "--method", "ls-lbfgs", "--data-dir", &out_arg(&dir.path().join("nowhere")), "--out", &out_arg(&out)]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!out.join("records.csv").exists());
}

#[test]
fn data_dir_comes_from_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let o = Command::new(env!("CARGO_BIN_EXE_qnbench"))
        .args(["run", "--task", "mnist", "--method", "ls-lbfgs", "--out", &out_arg(&dir.path().join("out"))])
        .env(DATA_DIR_ENV, dir.path().join("empty"))
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(3));
}

#[test]
fn non_convergence_exits_4_with_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let o = qnbench(&["run", "--task", "rosenbrock", "--method", "ls-lbfgs", "--max-iters", "5", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(4));
    let summary = Summary::from_json(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert!(!summary.converged);
    assert_eq!(summary.iterations, 5);
}

#[test]
fn gridworld_run_writes_evaluations() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("map.txt");
    fs::write(&map, "...G\n.#..\n....\n").unwrap();
    let out = dir.path().join("out");
    let o = qnbench(&["run", "--task", "gridworld", "--method", "ls-lbfgs", "--map", &out_arg(&map), "--episodes", "400", "--b", "64", "--out", &out_arg(&out)]);
    assert!(matches!(o.status.code(), Some(0 | 4)));
    let evals = fs::read_to_string(out.join("eval.csv")).unwrap();
    assert_eq!(evals.lines().next(), Some("step,score,value_gap"));
    let summary = Summary::from_json(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary.policy_states, Some(10));
}

#[test]
fn probe_bound_writes_offsets() {
    let dir = tempfile::tempdir().unwrap();
    let o = qnbench(&["probe-bound", "--iters", "50", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(dir.path().join("probe.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("iter,offset,bound"));
    assert_eq!(csv.lines().count(), 52);
    assert!(dir.path().join("probe.json").exists());
}

#[test]
fn probe_bound_rejects_large_steps() {
    let dir = tempfile::tempdir().unwrap();
    let o = qnbench(&["probe-bound", "--alpha", "50", "--iters", "5", "--out", &out_arg(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("probe.csv").exists());
}

#[test]
fn timing_table_has_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let o = qnbench(&[
        "timing", "--methods", "ls-lbfgs,sgd", "--batch-sizes", "100,200", "--memories", "5", "--iters", "10", "--out", &out_arg(dir.path()),
    ]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("timing.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("method,b,m,iterations,fevals,gevals,wall_ms"));
    assert_eq!(csv.lines().count(), 5);
}
