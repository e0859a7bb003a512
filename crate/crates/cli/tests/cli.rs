//! End-to-end checks of the installed binary: exit codes, emitted files, and
//! stdout/stderr contracts, driven through real subprocesses. Numeric
//! behavior is covered by the core tests and `acceptance.rs`; these tests use
//! a deliberately tiny scenario so each invocation finishes in milliseconds.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fedhpc_sim::{report, scenarios};

/// Fresh command for the built binary with the seed env var cleared so
/// ambient environment cannot leak into tests that don't set it.
fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_fedhpc-sim"));
    cmd.env_remove("FEDHPC_SIM_SEED");
    cmd
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("binary runs")
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("utf8 stdout")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("utf8 stderr")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code present")
}

/// Two small facilities, a 6-feature task, and a 6-round budget: enough to
/// exercise every code path while keeping each subprocess run instant.
const TINY: &str = r#"{
  "name": "tiny",
  "seed": 5,
  "algorithm": { "kind": "fedavg" },
  "facilities": [
    {
      "name": "Alpha",
      "nodes": 2,
      "gpus_per_node": 1,
      "micro_batch": 4,
      "throughput_points": [[1, 200.0], [4, 600.0]],
      "init_overhead_s": 5.0,
      "queue": { "median_s": 10.0, "sigma": 0.3, "node_scaling": [[1, 1.0], [4, 2.0]] },
      "rtt_ms": 1.0,
      "bandwidth_asymptote_mb_s": 100.0,
      "bandwidth_halfsize_mb": 100.0
    },
    {
      "name": "Beta",
      "nodes": 1,
      "gpus_per_node": 1,
      "micro_batch": 4,
      "throughput_points": [[1, 80.0], [4, 240.0]],
      "init_overhead_s": 8.0,
      "queue": { "median_s": 30.0, "sigma": 0.3, "node_scaling": [[1, 1.0], [4, 2.0]] },
      "rtt_ms": 5.0,
      "bandwidth_asymptote_mb_s": 50.0,
      "bandwidth_halfsize_mb": 100.0
    }
  ],
  "task": {
    "n_features": 6,
    "n_classes": 3,
    "noise_sigma": 1.0,
    "train_samples_total": 600,
    "test_samples_total": 120,
    "partition_skew": 0.7
  },
  "partition_weights": [2.0, 1.0],
  "total_rounds_budget": 6,
  "base_steps": 8,
  "trainer": { "learning_rate": 0.05, "micro_batch": 16 },
  "transfer_param_count": 1000000,
  "expected_round_s": 100.0
}"#;

fn write_tiny(dir: &Path) -> PathBuf {
    let path = dir.join("tiny.cfg");
    std::fs::write(&path, TINY).expect("write tiny config");
    path
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path)
        .unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

#[test]
fn simulate_writes_metrics_and_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&out_dir));
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    let metrics = read(&out_dir.join("metrics.csv"));
    assert_eq!(metrics.lines().next().unwrap(), report::METRICS_HEADER);
    assert!(metrics.lines().count() > 1, "metrics rows present");
    let summary = read(&out_dir.join("summary.txt"));
    assert!(summary.contains("scenario = tiny"));
    assert!(summary.contains("seed = 5"));
    assert!(summary.contains("final_global_loss = "));
    // No trace requested: the event log stays off disk.
    assert!(!out_dir.join("events.csv").exists());
    let stdout = stdout_of(&out);
    assert!(stdout.contains("wrote "), "paths echoed: {stdout}");
    assert!(stdout.contains("final_global_loss = "), "summary echoed: {stdout}");
}

#[test]
fn simulate_trace_writes_event_log() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(bin()
        .args(["simulate", "--trace", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    let events = read(&out_dir.join("events.csv"));
    assert_eq!(events.lines().next().unwrap(), report::EVENTS_HEADER);
    assert!(events.lines().count() > 1, "event rows present");
}

#[test]
fn missing_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin()
        .args(["simulate", "--config"])
        .arg(dir.path().join("absent.cfg"))
        .arg("--out")
        .arg(dir.path().join("out")));
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("config error"), "stderr: {}", stderr_of(&out));
    assert!(!dir.path().join("out").exists(), "no output on config error");
}

#[test]
fn malformed_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("broken.cfg");
    std::fs::write(&cfg, "{ \"name\": ").unwrap();
    let out = run(bin().args(["simulate", "--config"]).arg(&cfg));
    assert_eq!(code(&out), 2);
    assert!(stderr_of(&out).contains("parse failed"), "stderr: {}", stderr_of(&out));
}

#[test]
fn unknown_algorithm_lists_valid_names() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let out = run(bin()
        .args(["simulate", "--algorithm", "fedavgg", "--config"])
        .arg(&cfg));
    assert_eq!(code(&out), 2);
    let err = stderr_of(&out);
    assert!(
        err.contains("valid names: fedavg, fedasync, fedbuff, fedcompass"),
        "stderr: {err}"
    );
}

#[test]
fn existing_outputs_need_force() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let out_dir = dir.path().join("out");
    let first = run(bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&out_dir));
    assert_eq!(code(&first), 0);
    let second = run(bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(&out_dir));
    assert_eq!(code(&second), 2, "refuses to overwrite");
    assert!(stderr_of(&second).contains("--force"), "stderr: {}", stderr_of(&second));
    let forced = run(bin()
        .args(["simulate", "--force", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(code(&forced), 0, "stderr: {}", stderr_of(&forced));
}

#[test]
fn seed_flag_beats_seed_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());

    let env_only = dir.path().join("env_only");
    let out = run(bin()
        .env("FEDHPC_SIM_SEED", "7")
        .args(["simulate", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&env_only));
    assert_eq!(code(&out), 0);
    assert!(read(&env_only.join("summary.txt")).contains("seed = 7"));

    let flag_wins = dir.path().join("flag_wins");
    let out = run(bin()
        .env("FEDHPC_SIM_SEED", "7")
        .args(["simulate", "--seed", "9", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&flag_wins));
    assert_eq!(code(&out), 0);
    assert!(read(&flag_wins.join("summary.txt")).contains("seed = 9"));

    let bad_env = run(bin()
        .env("FEDHPC_SIM_SEED", "zebra")
        .args(["simulate", "--config"])
        .arg(&cfg));
    assert_eq!(code(&bad_env), 2, "unparseable env seed is a config error");
}

#[test]
fn csv_format_writes_summary_csv() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(bin()
        .args(["simulate", "--format", "csv", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    let summary = read(&out_dir.join("summary.csv"));
    assert_eq!(summary.lines().next().unwrap(), "key,value");
    assert!(summary.contains("seed,5"));
    assert!(!out_dir.join("summary.txt").exists());
}

#[test]
fn sweep_writes_per_seed_dirs_and_rollup() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(bin()
        .args(["simulate", "--sweep-seeds", "3", "--jobs", "2", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out_dir));
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    // Seeds start at the config seed (5) and increment.
    for seed in 5..8u64 {
        let metrics = out_dir.join(format!("seed_{seed}")).join("metrics.csv");
        assert!(metrics.exists(), "missing {}", metrics.display());
    }
    let rollup = read(&out_dir.join("sweep_summary.csv"));
    assert!(rollup.lines().next().unwrap().starts_with("seed,"));
    assert_eq!(rollup.lines().count(), 4, "header plus one row per seed");
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out_dir in [&out_a, &out_b] {
        let out = run(bin().args(["simulate", "--config"]).arg(&cfg).arg("--out").arg(out_dir));
        assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    }
    assert_eq!(
        std::fs::read(out_a.join("metrics.csv")).unwrap(),
        std::fs::read(out_b.join("metrics.csv")).unwrap(),
        "same config and seed give identical bytes"
    );
}

#[test]
fn compare_writes_per_algorithm_metrics_and_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(bin().args(["compare", "--config"]).arg(&cfg).arg("--out").arg(&out_dir));
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    for algo in ["fedavg", "fedasync", "fedbuff", "fedcompass"] {
        assert!(out_dir.join(format!("metrics_{algo}.csv")).exists(), "metrics for {algo}");
    }
    let table = read(&out_dir.join("comparison.csv"));
    assert!(table.lines().next().unwrap().starts_with("algorithm,final_global_loss"));
    assert_eq!(table.lines().count(), 5, "header plus one row per algorithm");
}

#[test]
fn compare_rejects_bad_algorithm_lists() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_tiny(dir.path());
    let single = run(bin()
        .args(["compare", "--algorithms", "fedavg", "--config"])
        .arg(&cfg));
    assert_eq!(code(&single), 2);
    assert!(stderr_of(&single).contains("at least 2"), "stderr: {}", stderr_of(&single));

    let dup = run(bin()
        .args(["compare", "--algorithms", "fedavg,fedavg", "--config"])
        .arg(&cfg));
    assert_eq!(code(&dup), 2);
    assert!(stderr_of(&dup).contains("twice"), "stderr: {}", stderr_of(&dup));

    let misspelled = run(bin()
        .args(["compare", "--algorithms", "fedavg,fedsync", "--config"])
        .arg(&cfg));
    assert_eq!(code(&misspelled), 2);
    assert!(
        stderr_of(&misspelled).contains("valid names: fedavg, fedasync, fedbuff, fedcompass"),
        "stderr: {}",
        stderr_of(&misspelled)
    );
}

#[test]
fn emit_defaults_round_trips_through_simulate_and_calibrate() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(bin().args(["emit-defaults", "--out"]).arg(dir.path()));
    assert_eq!(code(&out), 0, "stderr: {}", stderr_of(&out));
    for (name, text) in scenarios::SHIPPED {
        assert_eq!(&read(&dir.path().join(name)), text, "{name} emitted byte-exact");
    }

    // Refuses to clobber the files it just wrote, unless forced.
    let again = run(bin().args(["emit-defaults", "--out"]).arg(dir.path()));
    assert_eq!(code(&again), 2);
    let forced = run(bin().args(["emit-defaults", "--force", "--out"]).arg(dir.path()));
    assert_eq!(code(&forced), 0);

    // The emitted scenario is directly runnable and passes its own anchors.
    let queued = dir.path().join("table4_queued.cfg");
    let sim = run(bin()
        .args(["simulate", "--config"])
        .arg(&queued)
        .arg("--out")
        .arg(dir.path().join("run")));
    assert_eq!(code(&sim), 0, "stderr: {}", stderr_of(&sim));
    assert!(stdout_of(&sim).contains("final_global_loss = "));

    let cal = run(bin().args(["calibrate-check", "--config"]).arg(&queued));
    assert_eq!(code(&cal), 0, "stderr: {}", stderr_of(&cal));
    let lines = stdout_of(&cal);
    assert!(lines.contains(": PASS"), "stdout: {lines}");
    assert!(!lines.contains("FAIL"), "stdout: {lines}");
}

#[test]
fn failed_calibration_anchor_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    // Tiny scenario plus one throughput anchor far from the configured curve.
    let mut file: serde_json::Value = serde_json::from_str(TINY).unwrap();
    file["calibration"] = serde_json::json!({
        "throughput_anchors": [
            { "facility": "Alpha", "nodes": 4, "samples_per_s": 9999.0, "tolerance_pct": 1.0 }
        ]
    });
    let cfg = dir.path().join("bad_anchor.cfg");
    std::fs::write(&cfg, serde_json::to_string_pretty(&file).unwrap()).unwrap();
    let out = run(bin().args(["calibrate-check", "--config"]).arg(&cfg));
    assert_eq!(code(&out), 3, "failed anchors are runtime errors");
    assert!(stdout_of(&out).contains(": FAIL"), "stdout: {}", stdout_of(&out));
    assert!(
        stderr_of(&out).contains("calibration checks failed"),
        "stderr: {}",
        stderr_of(&out)
    );
}

#[test]
fn no_subcommand_is_a_usage_error() {
    let out = run(&mut bin());
    assert_eq!(code(&out), 2, "clap usage errors exit 2");
    assert!(stderr_of(&out).to_lowercase().contains("usage"));
}
