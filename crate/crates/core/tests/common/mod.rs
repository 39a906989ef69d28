#![allow(dead_code)]

use std::path::{Path, PathBuf};

use remedbench_core::chaos::{inject, FailureSpec, FailureType, InjectionRecord};
use remedbench_core::cluster::{load_topology, topology, ClusterState};

pub const CORPUS_NAMES: [&str; 4] = [
    "scale_on_high_cpu",
    "probe_news_service",
    "scale_news_replicas",
    "raise_news_cpu_limits",
];

pub fn corpus_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

pub fn goldens_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/goldens")
}

pub fn corpus_text(name: &str) -> String {
    let path = corpus_dir().join(format!("{name}.yml"));
    std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

/// The case-study cluster: tt-like topology with CPU saturation injected on
/// ts-news-service (500m limit, 450m stress, one replica).
pub fn case_study_state() -> (ClusterState, InjectionRecord) {
    let mut state = load_topology(topology::TT_LIKE).expect("tt topology loads");
    let record = inject(
        &mut state,
        &FailureSpec::new(FailureType::CpuSaturation, "ts-news-service"),
        0,
    )
    .expect("injection succeeds");
    assert!(record.injected_ok);
    (state, record)
}
