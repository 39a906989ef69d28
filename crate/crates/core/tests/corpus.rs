//! Golden transcripts for the playbook corpus. Each corpus playbook runs
//! against a fresh case-study cluster; the serialized transcript must match
//! the stored golden byte-for-byte. Regenerate with REGEN_GOLDENS=1 after an
//! intentional behavior change and review the diff.

mod common;

use remedbench_core::playbook::{parse_playbook, run_playbook, Inventory, Transcript};

fn execute_corpus_entry(name: &str) -> Transcript {
    let text = common::corpus_text(name);
    let pb = parse_playbook(&text).unwrap_or_else(|e| panic!("{name} must parse: {e}"));
    let (mut state, _) = common::case_study_state();
    run_playbook(&pb, &mut state, &Inventory::default())
        .unwrap_or_else(|e| panic!("{name} must run: {e}"))
}

#[test]
fn corpus_transcripts_match_goldens() {
    let regen = std::env::var("REGEN_GOLDENS").is_ok();
    for name in common::CORPUS_NAMES {
        let transcript = execute_corpus_entry(name);
        let mut rendered = serde_json::to_string_pretty(&transcript).unwrap();
        rendered.push('\n');
        let golden_path = common::goldens_dir().join(format!("{name}.json"));
        if regen {
            std::fs::create_dir_all(common::goldens_dir()).unwrap();
            std::fs::write(&golden_path, &rendered).unwrap();
            eprintln!("regenerated {}", golden_path.display());
            continue;
        }
        let golden = std::fs::read_to_string(&golden_path)
            .unwrap_or_else(|e| panic!("missing golden {}: {e}", golden_path.display()));
        assert_eq!(
            rendered, golden,
            "{name}: transcript drifted from its golden"
        );
    }
}

#[test]
fn corpus_outcomes_are_as_documented() {
    // host-level metrics commands are out of the simulator's scope, so the
    // cpu-scale playbook fails at its first task
    let t = execute_corpus_entry("scale_on_high_cpu");
    assert!(!t.ok());
    assert_eq!(t.records.len(), 1);
    assert_eq!(t.records[0].result.rc, 127);

    // the probe playbook reads the injected state without touching it
    let t = execute_corpus_entry("probe_news_service");
    assert!(t.ok());
    assert_eq!(t.records[0].result.stdout, "1\n500m\nNo HPA found");
    assert_eq!(t.records[1].result.stdout, "100m");

    // scaling executes cleanly (its own verify task passes at 3 replicas)
    let t = execute_corpus_entry("scale_news_replicas");
    assert!(t.ok());
    assert_eq!(t.records.len(), 2);
    assert!(!t.records[0].changed, "stderr probe sees nothing to match");

    // the resource adjustment also executes cleanly
    let t = execute_corpus_entry("raise_news_cpu_limits");
    assert!(t.ok());
    assert_eq!(t.records.len(), 3);
}
