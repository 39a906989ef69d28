//! Report emission: the versioned results document plus CSV and markdown
//! summaries, and the timestamp normalization used for replay comparisons.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde_json::{json, Value};

use super::{BenchError, RunOutput};

pub const RESULTS_SCHEMA_VERSION: u32 = 1;

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> BenchError + '_ {
    move |source| BenchError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn results_document(run: &RunOutput) -> Value {
    let generated = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    json!({
        "schema_version": RESULTS_SCHEMA_VERSION,
        "generated_at_unix": generated,
        "config": run.spec,
        "scenario_set": run.scenario_set,
        "summary": run.summary,
        "episodes": run.episodes,
    })
}

/// Write results.json, summary.csv, per_type.csv, summary.md and per-episode
/// transcript artifacts under `out_dir`. Returns the paths written.
pub fn emit_report(run: &RunOutput, out_dir: &Path) -> Result<Vec<PathBuf>, BenchError> {
    fs::create_dir_all(out_dir).map_err(io_err(out_dir))?;
    let mut written = Vec::new();

    let results_path = out_dir.join("results.json");
    let doc = results_document(run);
    let mut body = serde_json::to_string_pretty(&doc).expect("results serialize");
    body.push('\n');
    fs::write(&results_path, body).map_err(io_err(&results_path))?;
    written.push(results_path);

    let summary_path = out_dir.join("summary.csv");
    fs::write(&summary_path, summary_csv(run)).map_err(io_err(&summary_path))?;
    written.push(summary_path);

    let per_type_path = out_dir.join("per_type.csv");
    fs::write(&per_type_path, per_type_csv(run)).map_err(io_err(&per_type_path))?;
    written.push(per_type_path);

    let md_path = out_dir.join("summary.md");
    fs::write(&md_path, summary_md(run)).map_err(io_err(&md_path))?;
    written.push(md_path);

    let transcripts_dir = out_dir.join("transcripts");
    fs::create_dir_all(&transcripts_dir).map_err(io_err(&transcripts_dir))?;
    for episode in &run.episodes {
        if let Some(outcome) = &episode.outcome {
            let path = transcripts_dir.join(format!("{}.json", episode.scenario_id));
            let mut body = serde_json::to_string_pretty(outcome).expect("outcome serialize");
            body.push('\n');
            fs::write(&path, body).map_err(io_err(&path))?;
            written.push(path);
        }
    }
    Ok(written)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

fn summary_csv(run: &RunOutput) -> String {
    let mut out = String::from(
        "system,difficulty,policy,backend,seed,episodes,injected,successes,ra,arl_s,atc,atc_all\n",
    );
    // header-only when nothing ran
    if !run.episodes.is_empty() {
        let s = &run.summary;
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{},{:.6},{},{},{}\n",
            run.spec.system,
            run.spec.difficulty,
            run.spec.policy,
            run.spec.backend,
            run.spec.seed,
            s.n_episodes,
            s.n_injected,
            s.n_success,
            s.ra,
            fmt_opt(s.arl_s),
            fmt_opt(s.atc),
            fmt_opt(s.atc_all),
        ));
    }
    out
}

fn per_type_csv(run: &RunOutput) -> String {
    let mut out = String::from("failure_type,episodes,successes,ra\n");
    for row in &run.summary.per_type {
        out.push_str(&format!(
            "{},{},{},{:.6}\n",
            row.failure_type.display_name(),
            row.episodes,
            row.successes,
            row.ra
        ));
    }
    out
}

fn summary_md(run: &RunOutput) -> String {
    let s = &run.summary;
    let mut cells = std::collections::BTreeMap::new();
    for row in &s.per_difficulty {
        cells.insert(row.difficulty.to_string(), format!("{:.2}", row.ra * 100.0));
    }
    let cell = |d: &str| cells.get(d).cloned().unwrap_or_else(|| "-".to_string());
    let mut out = String::from("# Benchmark summary\n\n");
    out.push_str("| Backend | Method | System | Easy | Medium | Hard | Overall RA % |\n");
    out.push_str("|---|---|---|---|---|---|---|\n");
    out.push_str(&format!(
        "| {} | {} | {} | {} | {} | {} | {:.2} |\n\n",
        run.spec.backend,
        run.spec.policy,
        run.spec.system,
        cell("easy"),
        cell("medium"),
        cell("hard"),
        s.ra * 100.0,
    ));
    out.push_str(&format!(
        "- episodes: {} ({} injected, {} remediated)\n",
        s.n_episodes, s.n_injected, s.n_success
    ));
    out.push_str(&format!(
        "- ARL: {}\n- ATC: {}\n- ATC over all injected: {}\n- availability violations: {}\n",
        s.arl_s
            .map(|v| format!("{v:.3} s"))
            .unwrap_or_else(|| "n/a (no successes)".into()),
        s.atc
            .map(|v| format!("{v:.1} tokens"))
            .unwrap_or_else(|| "n/a (no successes)".into()),
        s.atc_all
            .map(|v| format!("{v:.1} tokens"))
            .unwrap_or_else(|| "n/a".into()),
        s.availability_violations,
    ));
    if !s.per_type.is_empty() {
        out.push_str("\n| Failure type | Episodes | Remediated | RA % |\n|---|---|---|---|\n");
        for row in &s.per_type {
            out.push_str(&format!(
                "| {} | {} | {} | {:.2} |\n",
                row.failure_type.display_name(),
                row.episodes,
                row.successes,
                row.ra * 100.0
            ));
        }
    }
    out
}

/// Blank every wall-clock field so two runs of the same seeded configuration
/// compare byte-identically. Used by replay checks and determinism tests.
pub fn normalize_results_json(text: &str) -> Result<String, serde_json::Error> {
    let mut doc: Value = serde_json::from_str(text)?;
    scrub(&mut doc);
    let mut out = serde_json::to_string_pretty(&doc)?;
    out.push('\n');
    Ok(out)
}

fn scrub(value: &mut Value) {
    match value {
        Value::Object(map) => {
            for (key, v) in map.iter_mut() {
                match key.as_str() {
                    "generated_at_unix" => *v = json!(0),
                    "wall_latency_s" => *v = json!(0.0),
                    "arl_s" => {
                        if !v.is_null() {
                            *v = json!(0.0);
                        }
                    }
                    "attempt_latencies_s" => *v = json!([]),
                    _ => scrub(v),
                }
            }
        }
        Value::Array(items) => items.iter_mut().for_each(scrub),
        _ => {}
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{generate_scenarios, run_benchmark, BackendKind, Difficulty, RunSpec};
    use crate::cluster::SystemId;
    use crate::policy::PolicyKind;

    fn small_run() -> RunOutput {
        let mut spec = RunSpec::new(
            SystemId::SmLike,
            Difficulty::Easy,
            PolicyKind::SoloGen,
            BackendKind::Oracle,
        );
        spec.seed = 5;
        spec.count = Some(3);
        run_benchmark(&spec, None).unwrap()
    }

    #[test]
    fn emit_writes_the_expected_files() {
        let run = small_run();
        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&run, dir.path()).unwrap();
        assert!(files.iter().any(|p| p.ends_with("results.json")));
        let results: Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("results.json")).unwrap(),
        )
        .unwrap();
        assert_eq!(results["schema_version"], 1);
        assert_eq!(results["episodes"].as_array().unwrap().len(), 3);

        let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(csv.lines().count(), 2);
        let per_type = std::fs::read_to_string(dir.path().join("per_type.csv")).unwrap();
        assert!(per_type.lines().count() >= 2);
        assert!(dir.path().join("summary.md").exists());
        assert_eq!(
            std::fs::read_dir(dir.path().join("transcripts"))
                .unwrap()
                .count(),
            3
        );
    }

    #[test]
    fn empty_results_emit_headers_only() {
        let spec = RunSpec::new(
            SystemId::SmLike,
            Difficulty::Easy,
            PolicyKind::SoloGen,
            BackendKind::Oracle,
        );
        let scenario_set = generate_scenarios(SystemId::SmLike, Difficulty::Easy, 1, 1).unwrap();
        let run = RunOutput {
            spec,
            scenario_set: crate::bench::ScenarioSet {
                scenarios: vec![],
                ..scenario_set
            },
            episodes: vec![],
            summary: crate::bench::aggregate(&[]),
        };
        let dir = tempfile::tempdir().unwrap();
        emit_report(&run, dir.path()).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("summary.csv")).unwrap();
        assert_eq!(csv.lines().count(), 1);
        let per_type = std::fs::read_to_string(dir.path().join("per_type.csv")).unwrap();
        assert_eq!(per_type.lines().count(), 1);
    }

    #[test]
    fn normalization_blanks_wall_clock_fields() {
        let run = small_run();
        let text = serde_json::to_string_pretty(&results_document(&run)).unwrap();
        let normalized = normalize_results_json(&text).unwrap();
        let doc: Value = serde_json::from_str(&normalized).unwrap();
        assert_eq!(doc["generated_at_unix"], 0);
        for e in doc["episodes"].as_array().unwrap() {
            assert_eq!(e["wall_latency_s"], 0.0);
        }
    }
}
