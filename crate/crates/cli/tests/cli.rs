use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cci-lab"));
    cmd.env_remove("ACPO_LOG");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, name: &str, mdp: &str, behavior: &str, n: usize, seed: u64) -> PathBuf {
    let out = dir.join(name);
    ok(&[
        "gen", "--mdp", mdp, "--behavior", behavior, "--n", &n.to_string(), "--seed", &seed.to_string(), "--out",
        path(&out),
    ]);
    out
}

fn read_csv(p: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(p).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_owned).collect();
    let rows = r.records().map(|rec| rec.unwrap().iter().map(str::to_owned).collect()).collect();
    (header, rows)
}

#[test]
fn gen_writes_header_plus_one_line_per_transition() {
    let dir = TempDir::new().unwrap();
    let a = gen(dir.path(), "a.jsonl", "gridworld:5x5", "uniform", 10_000, 7);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 10_001);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("a.jsonl.manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 7);
    assert_eq!(manifest["config_hash"].as_str().unwrap().len(), 64);

    let b = gen(dir.path(), "b.jsonl", "gridworld:5x5", "uniform", 10_000, 7);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
}

#[test]
fn gen_with_zero_transitions_writes_only_the_header() {
    let dir = TempDir::new().unwrap();
    let p = gen(dir.path(), "empty.jsonl", "chain:4", "uniform", 0, 1);
    assert_eq!(fs::read_to_string(p).unwrap().lines().count(), 1);
}

#[test]
fn usage_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("x.jsonl");
    for args in [
        vec!["gen", "--mdp", "torus:3", "--n", "5", "--out", path(&out)],
        vec!["gen", "--mdp", "chain:3", "--n", "5", "--out", path(&out), "--bogus"],
        vec!["verify", "--suite", "nonsense"],
        vec!["gen", "--mdp", "chain:3", "--n", "5", "--out", "/nonexistent/dir/x.jsonl"],
    ] {
        let o = run(&args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
        assert!(!o.stderr.is_empty());
    }
}

#[test]
fn train_writes_trace_checkpoint_and_manifest() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "d.jsonl", "chain:5:gamma=0.9", "eps-greedy:0.3", 2000, 3);
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"n_steps": 300, "eval_every": 50, "batch_size": 32, "gamma": 0.9, "lr_actor": 0.05}"#).unwrap();
    let run_dir = dir.path().join("run");
    ok(&["train", "--dataset", path(&data), "--config", path(&config), "--out", path(&run_dir)]);

    let (header, rows) = read_csv(&run_dir.join("trace.csv"));
    assert_eq!(header, ["step", "lambda", "constraint", "J_pi", "J_beta"]);
    assert_eq!(rows.len(), 300 / 50 + 1);
    for row in &rows {
        assert!(row[1].parse::<f64>().unwrap() >= 0.0);
    }
    let checkpoint: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("checkpoint.json")).unwrap()).unwrap();
    assert_eq!(checkpoint["step"], 300);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(run_dir.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["n_steps"], 300);

    // Same config and seed, same bytes.
    let again = dir.path().join("again");
    ok(&["train", "--dataset", path(&data), "--config", path(&config), "--out", path(&again)]);
    assert_eq!(fs::read(run_dir.join("trace.csv")).unwrap(), fs::read(again.join("trace.csv")).unwrap());
}

#[test]
fn malformed_config_reports_fields() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "d.jsonl", "chain:3", "uniform", 100, 0);
    let config = dir.path().join("bad.json");
    fs::write(&config, r#"{"alpha": -1, "batch_size": 0}"#).unwrap();
    let o = run(&["train", "--dataset", path(&data), "--config", path(&config), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("alpha") && err.contains("batch_size"), "{err}");

    fs::write(&config, r#"{"alpah": 0.1}"#).unwrap();
    let o = run(&["train", "--dataset", path(&data), "--config", path(&config), "--out", path(dir.path())]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("alpah"));
}

#[test]
fn verify_exit_status_tracks_check_outcomes() {
    let dir = TempDir::new().unwrap();
    let out = ok(&["verify", "--suite", "pdl", "--n", "100", "--seed", "1"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("\"check\":\"pdl_maxent\""), "{stdout}");
    assert!(stdout.trim_end().ends_with("0 failures"));

    let reports = dir.path().join("faulty");
    let o = run(&["verify", "--suite", "pdl", "--n", "5", "--inject-fault", "--out", path(&reports)]);
    assert_eq!(o.status.code(), Some(1));
    let lines = fs::read_to_string(reports.join("reports.jsonl")).unwrap();
    assert!(lines.lines().any(|l| l.contains("\"pass\":false")));
    assert!(reports.join("manifest.json").exists());
}

#[test]
fn verify_all_emits_a_summary_per_check() {
    let out = ok(&["verify", "--suite", "all", "--n", "4", "--seed", "2"]);
    let stdout = String::from_utf8(out.stdout).unwrap();
    for check in ["pdl_maxent", "prop1_monotone", "theorem1", "theorem2_shaped", "occupancy_bound"] {
        assert!(stdout.contains(check), "missing {check}");
    }
}

#[test]
fn spectrum_rows_follow_the_grid() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "d.jsonl", "gridworld:4x4:gamma=0.9", "eps-greedy:0.3", 5000, 5);
    let csv_path = dir.path().join("spectrum.csv");
    ok(&["spectrum", "--dataset", path(&data), "--alpha", "0.1", "--lambdas", "1,0,0.1", "--out", path(&csv_path)]);
    let (header, rows) = read_csv(&csv_path);
    assert_eq!(header, ["lambda", "regime", "g", "dg_dlambda", "wbc_threshold"]);
    let regimes: Vec<&str> = rows.iter().map(|r| r[1].as_str()).collect();
    assert_eq!(regimes[..2], ["Support", "KlDensity"]);
    assert!(["DensityToWbc", "PracticalWbc"].contains(&regimes[2]));

    let dense = dir.path().join("dense.csv");
    let grid: Vec<String> = (0..=40).map(|k| (0.05 * k as f64).to_string()).collect();
    ok(&["spectrum", "--dataset", path(&data), "--lambdas", &grid.join(","), "--out", path(&dense)]);
    let (_, rows) = read_csv(&dense);
    let g: Vec<f64> = rows.iter().map(|r| r[2].parse().unwrap()).collect();
    assert!(g.windows(2).all(|w| w[1] >= w[0] - 1e-12));
    assert!(rows.iter().all(|r| r[3].parse::<f64>().unwrap() >= 0.0));
}

#[test]
fn sweep_summarizes_runs_in_grid_order() {
    let dir = TempDir::new().unwrap();
    let data = gen(dir.path(), "d.jsonl", "chain:4:gamma=0.9", "uniform", 500, 1);
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"n_steps": 100, "eval_every": 50, "batch_size": 16, "gamma": 0.9}"#).unwrap();
    let out = dir.path().join("sweep");
    ok(&[
        "sweep", "--dataset", path(&data), "--config", path(&config), "--seeds", "0,1", "--lambda-inits", "0,0.5",
        "--out", path(&out),
    ]);
    let (header, rows) = read_csv(&out.join("summary.csv"));
    assert_eq!(header[0], "run");
    assert_eq!(rows.len(), 4);
    let order: Vec<(&str, f64)> = rows.iter().map(|r| (r[1].as_str(), r[3].parse().unwrap())).collect();
    assert_eq!(order, [("0", 0.0), ("1", 0.0), ("0", 0.5), ("1", 0.5)]);
    assert!(out.join("run-003/trace.csv").exists());

    // A single run with the same config reproduces the sweep's trace.
    let single_cfg = dir.path().join("single.json");
    fs::write(&single_cfg, r#"{"n_steps": 100, "eval_every": 50, "batch_size": 16, "gamma": 0.9, "lambda_init": 0.5}"#)
        .unwrap();
    let single = dir.path().join("single");
    ok(&["train", "--dataset", path(&data), "--config", path(&single_cfg), "--seed", "1", "--out", path(&single)]);
    assert_eq!(fs::read(single.join("trace.csv")).unwrap(), fs::read(out.join("run-003/trace.csv")).unwrap());
}
