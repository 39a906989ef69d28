//! End-to-end CLI tests against the built binary: exit-code contract, config
//! precedence, lint diagnostics, and replay equality.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_remedbench"))
}

fn run_ok(args: &[&str]) -> Output {
    let out = bin().args(args).output().expect("spawn remedbench");
    assert!(
        out.status.success(),
        "remedbench {args:?} failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn corpus_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join(format!("../../corpus/{name}"))
}

#[test]
fn help_exits_zero_for_every_subcommand() {
    for args in [
        vec!["--help"],
        vec!["run", "--help"],
        vec!["lint", "--help"],
        vec!["replay", "--help"],
        vec!["scenarios", "--help"],
    ] {
        let out = bin().args(&args).output().unwrap();
        assert_eq!(exit_code(&out), 0, "{args:?}");
        assert!(!out.stdout.is_empty());
    }
}

#[test]
fn oracle_easy_run_reports_full_accuracy() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_ok(&[
        "run",
        "--system",
        "sm",
        "--difficulty",
        "easy",
        "--policy",
        "thinkremed",
        "--backend",
        "oracle",
        "--seed",
        "1",
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("RA=1.000"), "{stdout}");
    for file in ["results.json", "summary.csv", "per_type.csv", "summary.md"] {
        assert!(dir.path().join(file).exists(), "{file} missing");
    }
}

#[test]
fn remote_backend_without_endpoint_is_a_config_error() {
    let out = bin()
        .args([
            "run",
            "--system",
            "sm",
            "--difficulty",
            "easy",
            "--policy",
            "sologen",
            "--backend",
            "remote",
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("endpoint"));
}

#[test]
fn unknown_flag_values_are_config_errors() {
    for args in [
        [
            "run",
            "--system",
            "mars",
            "--difficulty",
            "easy",
            "--policy",
            "sologen",
            "--backend",
            "oracle",
        ],
        [
            "run",
            "--system",
            "sm",
            "--difficulty",
            "brutal",
            "--policy",
            "sologen",
            "--backend",
            "oracle",
        ],
        [
            "run",
            "--system",
            "sm",
            "--difficulty",
            "easy",
            "--policy",
            "psychic",
            "--backend",
            "oracle",
        ],
    ] {
        let out = bin().args(args).output().unwrap();
        assert_eq!(exit_code(&out), 2, "{args:?}");
    }
}

#[test]
fn flags_override_config_file_values() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("bench.conf");
    std::fs::write(
        &config_path,
        "system = tt\ndifficulty = easy\npolicy = sologen\nbackend = oracle\nseed = 5\ntmax = 2\ncount = 2\n",
    )
    .unwrap();
    let read_config = |extra: &[&str]| -> serde_json::Value {
        let out_dir = tempfile::tempdir().unwrap();
        let mut args = vec![
            "run",
            "--config",
            config_path.to_str().unwrap(),
            "--out",
            out_dir.path().to_str().unwrap(),
        ];
        args.extend_from_slice(extra);
        run_ok(&args);
        let doc: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(out_dir.path().join("results.json")).unwrap(),
        )
        .unwrap();
        doc["config"].clone()
    };

    // config alone
    let base = read_config(&[]);
    assert_eq!(base["system"], "tt_like");
    assert_eq!(base["seed"], 5);
    assert_eq!(base["t_max"], 2);

    // each flag beats its config key
    assert_eq!(read_config(&["--system", "sm"])["system"], "sm_like");
    assert_eq!(read_config(&["--seed", "9"])["seed"], 9);
    assert_eq!(read_config(&["--tmax", "0"])["t_max"], 0);
}

#[test]
fn lint_exit_codes_and_warnings() {
    // host-level binaries parse but warn
    let out = bin()
        .args([
            "lint",
            corpus_path("scale_on_high_cpu.yml").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0);
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("unsupported binary at runtime: top"),
        "{stderr}"
    );

    let out = bin()
        .args([
            "lint",
            corpus_path("raise_news_cpu_limits.yml").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 0);

    // unsupported keywords are hard failures
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("looped.yml");
    std::fs::write(
        &bad,
        "- hosts: all\n  tasks:\n    - name: x\n      command: echo hi\n      loop: [1, 2]\n",
    )
    .unwrap();
    let out = bin()
        .args(["lint", bad.to_str().unwrap()])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unsupported keyword: loop"));
}

fn small_run(dir: &Path) -> PathBuf {
    run_ok(&[
        "run",
        "--system",
        "sm",
        "--difficulty",
        "easy",
        "--policy",
        "thinkremed",
        "--backend",
        "naive_then_oracle",
        "--seed",
        "3",
        "--count",
        "3",
        "--out",
        dir.to_str().unwrap(),
    ]);
    dir.join("results.json")
}

#[test]
fn replay_reproduces_and_detects_drift() {
    let dir = tempfile::tempdir().unwrap();
    let results = small_run(dir.path());
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&results).unwrap()).unwrap();
    let episode_id = doc["episodes"][0]["scenario_id"]
        .as_str()
        .unwrap()
        .to_string();

    let out = bin()
        .args(["replay", results.to_str().unwrap(), &episode_id])
        .output()
        .unwrap();
    assert_eq!(
        exit_code(&out),
        0,
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );

    // editing a stored playbook makes the replay diverge
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&results).unwrap()).unwrap();
    doc["episodes"][0]["outcome"]["final_playbooks"][0] =
        serde_json::Value::String("---\n- hosts: all\n  tasks: []\n".into());
    std::fs::write(&results, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    let out = bin()
        .args(["replay", results.to_str().unwrap(), &episode_id])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("mismatch"));
}

#[test]
fn replay_refuses_remote_backend_results() {
    let dir = tempfile::tempdir().unwrap();
    let results = small_run(dir.path());
    let mut doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&results).unwrap()).unwrap();
    doc["config"]["backend"] = "remote".into();
    doc["config"]["endpoint"] = "http://example.invalid/v1".into();
    doc["config"]["model"] = "some-model".into();
    std::fs::write(&results, serde_json::to_string_pretty(&doc).unwrap()).unwrap();
    let episode_id = doc["episodes"][0]["scenario_id"]
        .as_str()
        .unwrap()
        .to_string();

    let out = bin()
        .args(["replay", results.to_str().unwrap(), &episode_id])
        .output()
        .unwrap();
    assert_eq!(exit_code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("non-replayable backend"));
}

#[test]
fn scenario_export_is_deterministic_and_importable() {
    let a = run_ok(&[
        "scenarios",
        "--system",
        "sm",
        "--difficulty",
        "medium",
        "--seed",
        "4",
        "--count",
        "5",
    ]);
    let b = run_ok(&[
        "scenarios",
        "--system",
        "sm",
        "--difficulty",
        "medium",
        "--seed",
        "4",
        "--count",
        "5",
    ]);
    assert_eq!(a.stdout, b.stdout);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("scenarios.json");
    std::fs::write(&path, &a.stdout).unwrap();
    let out_dir = tempfile::tempdir().unwrap();
    let out = run_ok(&[
        "run",
        "--system",
        "sm",
        "--difficulty",
        "medium",
        "--policy",
        "sologen",
        "--backend",
        "oracle",
        "--scenarios",
        path.to_str().unwrap(),
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("episodes=5"), "{stdout}");
}

#[test]
fn naive_backend_with_no_retries_scores_zero_on_the_case_study_scenario() {
    // the case-study scenario as an importable set
    let set = serde_json::json!({
        "schema_version": 1,
        "system_id": "tt_like",
        "difficulty": "easy",
        "seed": 0,
        "scenarios": [{
            "id": "case-study-cpu",
            "specs": [{"failure_type": "CpuSaturation", "target_service": "ts-news-service"}]
        }]
    });
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("case.json");
    std::fs::write(&path, serde_json::to_string_pretty(&set).unwrap()).unwrap();

    let out_dir = tempfile::tempdir().unwrap();
    let out = run_ok(&[
        "run",
        "--system",
        "tt",
        "--difficulty",
        "easy",
        "--policy",
        "thinkremed",
        "--backend",
        "naive_then_oracle",
        "--tmax",
        "0",
        "--scenarios",
        path.to_str().unwrap(),
        "--out",
        out_dir.path().to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("RA=0.000"), "{stdout}");

    // one allowed reflection turns the same scenario green
    let out_dir2 = tempfile::tempdir().unwrap();
    let out = run_ok(&[
        "run",
        "--system",
        "tt",
        "--difficulty",
        "easy",
        "--policy",
        "thinkremed",
        "--backend",
        "naive_then_oracle",
        "--tmax",
        "1",
        "--scenarios",
        path.to_str().unwrap(),
        "--out",
        out_dir2.path().to_str().unwrap(),
    ]);
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("RA=1.000"), "{stdout}");
}
