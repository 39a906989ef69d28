//! Episode orchestration and metrics: scenario generation per difficulty, the
//! inject -> report -> policy -> verify -> reset loop, and aggregation of
//! remediation accuracy (RA), average remediation latency (ARL) and average
//! token consumption (ATC).

pub mod report;
pub mod rng;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;
use thiserror::Error;

use crate::chaos::{inject, FailureSpec, FailureType, InjectionRecord};
use crate::cluster::{parse_topology, ClusterState, SystemId, TopologyError};
use crate::playbook::Inventory;
use crate::policy::{
    run_policy, ChatTranscript, FailureReport, ModelBackend, PolicyConfig, PolicyKind,
    PolicyOutcome, RemoteChat, ScriptedBroken, ScriptedNaiveThenOracle, ScriptedOracle,
};
use crate::verify::verify_all;
use rng::{mix, SplitMix64};

pub use report::{emit_report, normalize_results_json};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Easy,
    Medium,
    Hard,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Easy, Difficulty::Medium, Difficulty::Hard];

    /// Standard suite sizes.
    pub fn default_count(self) -> u32 {
        match self {
            Difficulty::Easy => 23,
            Difficulty::Medium => 49,
            Difficulty::Hard => 80,
        }
    }
}

impl fmt::Display for Difficulty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Difficulty::Easy => "easy",
            Difficulty::Medium => "medium",
            Difficulty::Hard => "hard",
        };
        write!(f, "{s}")
    }
}

impl FromStr for Difficulty {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "easy" => Ok(Difficulty::Easy),
            "medium" => Ok(Difficulty::Medium),
            "hard" => Ok(Difficulty::Hard),
            other => Err(format!("unknown difficulty {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    Oracle,
    NaiveThenOracle,
    Broken,
    Remote,
}

impl BackendKind {
    pub fn deterministic(self) -> bool {
        self != BackendKind::Remote
    }
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            BackendKind::Oracle => "oracle",
            BackendKind::NaiveThenOracle => "naive_then_oracle",
            BackendKind::Broken => "broken",
            BackendKind::Remote => "remote",
        };
        write!(f, "{s}")
    }
}

impl FromStr for BackendKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "oracle" => Ok(BackendKind::Oracle),
            "naive_then_oracle" => Ok(BackendKind::NaiveThenOracle),
            "broken" => Ok(BackendKind::Broken),
            "remote" => Ok(BackendKind::Remote),
            other => Err(format!("unknown backend {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub id: String,
    pub specs: Vec<FailureSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSet {
    #[serde(default = "schema_version_one")]
    pub schema_version: u32,
    pub system_id: SystemId,
    pub difficulty: Difficulty,
    pub seed: u64,
    pub scenarios: Vec<Scenario>,
}

fn schema_version_one() -> u32 {
    1
}

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("scenario {0:?} has no failure specs")]
    EmptyScenario(String),
    #[error("requested {requested} scenarios but only {available} distinct combinations exist")]
    Capacity { requested: u32, available: usize },
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error("cluster error: {0}")]
    Cluster(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("scenario file error: {0}")]
    ScenarioFile(String),
}

/// Deterministic scenario sampling without replacement over (service, type)
/// combinations honoring the difficulty constraints: easy scenarios carry one
/// fault, medium two on distinct services, hard two or three spanning at
/// least two failure categories.
pub fn generate_scenarios(
    system_id: SystemId,
    difficulty: Difficulty,
    seed: u64,
    count: u32,
) -> Result<ScenarioSet, BenchError> {
    let topo = parse_topology(system_id.builtin_topology())?;
    let services: Vec<String> = topo.services.iter().map(|s| s.name.clone()).collect();

    // the atom space, in declaration order for determinism
    let pairs: Vec<(usize, FailureType)> = services
        .iter()
        .enumerate()
        .flat_map(|(si, _)| FailureType::ALL.into_iter().map(move |t| (si, t)))
        .collect();

    let mut combos: Vec<Vec<usize>> = Vec::new();
    match difficulty {
        Difficulty::Easy => {
            combos.extend((0..pairs.len()).map(|i| vec![i]));
        }
        Difficulty::Medium => {
            for i in 0..pairs.len() {
                for j in (i + 1)..pairs.len() {
                    if pairs[i].0 != pairs[j].0 {
                        combos.push(vec![i, j]);
                    }
                }
            }
        }
        Difficulty::Hard => {
            let spans_categories = |idx: &[usize]| {
                let first = pairs[idx[0]].1.category();
                idx.iter().any(|&i| pairs[i].1.category() != first)
            };
            for i in 0..pairs.len() {
                for j in (i + 1)..pairs.len() {
                    let combo = vec![i, j];
                    if spans_categories(&combo) {
                        combos.push(combo);
                    }
                }
            }
            for i in 0..pairs.len() {
                for j in (i + 1)..pairs.len() {
                    for k in (j + 1)..pairs.len() {
                        let combo = vec![i, j, k];
                        if spans_categories(&combo) {
                            combos.push(combo);
                        }
                    }
                }
            }
        }
    }

    if count as usize > combos.len() {
        return Err(BenchError::Capacity {
            requested: count,
            available: combos.len(),
        });
    }

    let stream = (difficulty as u64) << 8 | system_id as u64;
    let mut rng = SplitMix64::new(mix(seed, stream));
    rng.shuffle(&mut combos);
    combos.truncate(count as usize);

    let scenarios = combos
        .into_iter()
        .enumerate()
        .map(|(idx, combo)| Scenario {
            id: format!("{system_id}-{difficulty}-s{seed}-{idx:03}"),
            specs: combo
                .into_iter()
                .map(|i| {
                    let (si, ftype) = pairs[i];
                    FailureSpec::new(ftype, services[si].clone())
                })
                .collect(),
        })
        .collect();

    Ok(ScenarioSet {
        schema_version: 1,
        system_id,
        difficulty,
        seed,
        scenarios,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scenario_id: String,
    pub difficulty: Difficulty,
    pub failure_types: Vec<FailureType>,
    pub injected_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub not_injected_reason: Option<String>,
    pub success: bool,
    pub attempts: u32,
    pub wall_latency_s: f64,
    pub tokens: u64,
    pub availability_violations: u32,
    pub artifacts: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<PolicyOutcome>,
}

/// One full benchmark pass: inject every spec (aborting the scenario as
/// not-injected if any injection fails), hand the report to the policy, run
/// the authoritative verification, record, and reset to baseline.
pub fn run_episode(
    state: &mut ClusterState,
    scenario: &Scenario,
    episode_seed: u64,
    policy: PolicyKind,
    cfg: &PolicyConfig,
    backend: &dyn ModelBackend,
    difficulty: Difficulty,
) -> Result<EpisodeResult, BenchError> {
    if scenario.specs.is_empty() {
        return Err(BenchError::EmptyScenario(scenario.id.clone()));
    }
    let failure_types: Vec<FailureType> = scenario.specs.iter().map(|s| s.failure_type).collect();

    let mut records: Vec<InjectionRecord> = Vec::new();
    let mut failure_reason = None;
    for (i, spec) in scenario.specs.iter().enumerate() {
        match inject(state, spec, mix(episode_seed, 1000 + i as u64)) {
            Ok(r) if r.injected_ok => records.push(r),
            Ok(r) => {
                failure_reason = Some(r.reason.unwrap_or_else(|| "injection failed".to_string()));
                break;
            }
            Err(e) => {
                failure_reason = Some(e.to_string());
                break;
            }
        }
    }
    if let Some(reason) = failure_reason {
        state
            .reset_to_baseline()
            .map_err(|e| BenchError::Cluster(e.to_string()))?;
        return Ok(EpisodeResult {
            scenario_id: scenario.id.clone(),
            difficulty,
            failure_types,
            injected_ok: false,
            not_injected_reason: Some(reason),
            success: false,
            attempts: 0,
            wall_latency_s: 0.0,
            tokens: 0,
            availability_violations: 0,
            artifacts: Vec::new(),
            outcome: None,
        });
    }

    let report = FailureReport::from_records(state, &records, &Inventory::default());
    let started = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        run_policy(policy, &report, &records, backend, state, cfg)
    }))
    .unwrap_or_else(|panic| PolicyOutcome {
        final_playbooks: Vec::new(),
        transcripts: Vec::new(),
        verify_outcomes: Vec::new(),
        attempts_used: 1,
        success: false,
        wall_latency_s: started.elapsed().as_secs_f64(),
        attempt_latencies_s: Vec::new(),
        tokens: 0,
        failure_detail: Some(format!("policy panicked: {}", panic_message(&panic))),
        chat: ChatTranscript::default(),
    });

    // authoritative post-policy verification
    let success = matches!(
        verify_all(state, &records),
        Ok(outcomes) if !outcomes.is_empty() && outcomes.iter().all(|o| o.passed)
    );
    let wall_latency_s = started.elapsed().as_secs_f64();
    let availability_violations = outcome
        .transcripts
        .iter()
        .map(|t| t.availability_violations)
        .sum();

    state
        .reset_to_baseline()
        .map_err(|e| BenchError::Cluster(e.to_string()))?;

    Ok(EpisodeResult {
        scenario_id: scenario.id.clone(),
        difficulty,
        failure_types,
        injected_ok: true,
        not_injected_reason: None,
        success,
        attempts: outcome.attempts_used,
        wall_latency_s,
        tokens: outcome.tokens,
        availability_violations,
        artifacts: vec![format!("transcripts/{}.json", scenario.id)],
        outcome: Some(outcome),
    })
}

fn panic_message(panic: &Box<dyn std::any::Any + Send>) -> String {
    if let Some(s) = panic.downcast_ref::<&str>() {
        s.to_string()
    } else if let Some(s) = panic.downcast_ref::<String>() {
        s.clone()
    } else {
        "unknown panic".to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeRow {
    pub failure_type: FailureType,
    pub episodes: u32,
    pub successes: u32,
    pub ra: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DifficultyRow {
    pub difficulty: Difficulty,
    pub episodes: u32,
    pub successes: u32,
    pub ra: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub n_episodes: u32,
    /// Denominator for RA: episodes whose every injection succeeded.
    pub n_injected: u32,
    pub n_success: u32,
    pub ra: f64,
    /// Mean wall latency over successful episodes; absent with zero successes.
    pub arl_s: Option<f64>,
    /// Mean token cost over successful episodes; absent with zero successes.
    pub atc: Option<f64>,
    /// Mean token cost over all injected episodes, for transparency.
    pub atc_all: Option<f64>,
    pub availability_violations: u32,
    pub per_type: Vec<TypeRow>,
    pub per_difficulty: Vec<DifficultyRow>,
}

pub fn aggregate(results: &[EpisodeResult]) -> MetricsSummary {
    let injected: Vec<&EpisodeResult> = results.iter().filter(|r| r.injected_ok).collect();
    let successes: Vec<&EpisodeResult> = injected.iter().copied().filter(|r| r.success).collect();
    let n_injected = injected.len() as u32;
    let n_success = successes.len() as u32;
    let ra = if n_injected == 0 {
        0.0
    } else {
        n_success as f64 / n_injected as f64
    };
    let mean = |values: Vec<f64>| {
        if values.is_empty() {
            None
        } else {
            Some(values.iter().sum::<f64>() / values.len() as f64)
        }
    };
    let arl_s = mean(successes.iter().map(|r| r.wall_latency_s).collect());
    let atc = mean(successes.iter().map(|r| r.tokens as f64).collect());
    let atc_all = mean(injected.iter().map(|r| r.tokens as f64).collect());

    let mut per_type = Vec::new();
    for ftype in FailureType::ALL {
        let with_type: Vec<&&EpisodeResult> = injected
            .iter()
            .filter(|r| r.failure_types.contains(&ftype))
            .collect();
        if with_type.is_empty() {
            continue;
        }
        let wins = with_type.iter().filter(|r| r.success).count() as u32;
        per_type.push(TypeRow {
            failure_type: ftype,
            episodes: with_type.len() as u32,
            successes: wins,
            ra: wins as f64 / with_type.len() as f64,
        });
    }

    let mut per_difficulty = Vec::new();
    for difficulty in Difficulty::ALL {
        let with_diff: Vec<&&EpisodeResult> = injected
            .iter()
            .filter(|r| r.difficulty == difficulty)
            .collect();
        if with_diff.is_empty() {
            continue;
        }
        let wins = with_diff.iter().filter(|r| r.success).count() as u32;
        per_difficulty.push(DifficultyRow {
            difficulty,
            episodes: with_diff.len() as u32,
            successes: wins,
            ra: wins as f64 / with_diff.len() as f64,
        });
    }

    MetricsSummary {
        n_episodes: results.len() as u32,
        n_injected,
        n_success,
        ra,
        arl_s,
        atc,
        atc_all,
        availability_violations: results.iter().map(|r| r.availability_violations).sum(),
        per_type,
        per_difficulty,
    }
}

/// Full benchmark configuration: what to run and how.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpec {
    pub system: SystemId,
    pub difficulty: Difficulty,
    pub policy: PolicyKind,
    pub backend: BackendKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub seed: u64,
    pub t_max: u32,
    pub probe_budget: u32,
    pub timeout_s: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u32>,
    pub jobs: u32,
}

impl RunSpec {
    pub fn new(
        system: SystemId,
        difficulty: Difficulty,
        policy: PolicyKind,
        backend: BackendKind,
    ) -> Self {
        RunSpec {
            system,
            difficulty,
            policy,
            backend,
            endpoint: None,
            model: None,
            seed: 0,
            t_max: 1,
            probe_budget: 5,
            timeout_s: crate::policy::DEFAULT_TIMEOUT_S,
            count: None,
            jobs: 1,
        }
    }

    pub fn policy_config(&self) -> PolicyConfig {
        PolicyConfig {
            t_max: self.t_max,
            probe_budget: self.probe_budget,
            timeout_s: self.timeout_s,
        }
    }
}

pub fn make_backend(spec: &RunSpec) -> Result<Box<dyn ModelBackend>, BenchError> {
    match spec.backend {
        BackendKind::Oracle => Ok(Box::new(ScriptedOracle)),
        BackendKind::NaiveThenOracle => Ok(Box::new(ScriptedNaiveThenOracle)),
        BackendKind::Broken => Ok(Box::new(ScriptedBroken)),
        BackendKind::Remote => {
            let endpoint = spec.endpoint.clone().ok_or_else(|| {
                BenchError::Config("backend=remote requires an endpoint".to_string())
            })?;
            let model = spec
                .model
                .clone()
                .ok_or_else(|| BenchError::Config("backend=remote requires a model".to_string()))?;
            Ok(Box::new(RemoteChat::new(endpoint, model)))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOutput {
    pub spec: RunSpec,
    pub scenario_set: ScenarioSet,
    pub episodes: Vec<EpisodeResult>,
    pub summary: MetricsSummary,
}

/// Generate (or take) the scenario set and run every episode on a worker pool
/// of `jobs` independent cluster instances.
pub fn run_benchmark(
    spec: &RunSpec,
    scenarios: Option<ScenarioSet>,
) -> Result<RunOutput, BenchError> {
    let scenario_set = match scenarios {
        Some(s) => s,
        None => generate_scenarios(
            spec.system,
            spec.difficulty,
            spec.seed,
            spec.count
                .unwrap_or_else(|| spec.difficulty.default_count()),
        )?,
    };
    let backend = make_backend(spec)?;
    let cfg = spec.policy_config();
    let topo = parse_topology(spec.system.builtin_topology())?;

    let n = scenario_set.scenarios.len();
    let next = AtomicUsize::new(0);
    let slots: Mutex<Vec<(usize, Result<EpisodeResult, BenchError>)>> =
        Mutex::new(Vec::with_capacity(n));
    let jobs = spec.jobs.max(1) as usize;

    std::thread::scope(|scope| {
        for _ in 0..jobs.min(n.max(1)) {
            scope.spawn(|| {
                let mut state = ClusterState::from_topology(&topo);
                loop {
                    let idx = next.fetch_add(1, Ordering::SeqCst);
                    if idx >= n {
                        break;
                    }
                    let scenario = &scenario_set.scenarios[idx];
                    let episode_seed = mix(spec.seed, idx as u64);
                    let result = run_episode(
                        &mut state,
                        scenario,
                        episode_seed,
                        spec.policy,
                        &cfg,
                        backend.as_ref(),
                        scenario_set.difficulty,
                    );
                    slots.lock().unwrap().push((idx, result));
                }
            });
        }
    });

    let mut collected = slots.into_inner().unwrap();
    collected.sort_by_key(|(i, _)| *i);
    let episodes = collected
        .into_iter()
        .map(|(_, r)| r)
        .collect::<Result<Vec<_>, _>>()?;
    let summary = aggregate(&episodes);

    Ok(RunOutput {
        spec: spec.clone(),
        scenario_set,
        episodes,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_suite_sizes() {
        assert_eq!(Difficulty::Easy.default_count(), 23);
        assert_eq!(Difficulty::Medium.default_count(), 49);
        assert_eq!(Difficulty::Hard.default_count(), 80);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_scenarios(SystemId::SmLike, Difficulty::Easy, 7, 23).unwrap();
        let b = generate_scenarios(SystemId::SmLike, Difficulty::Easy, 7, 23).unwrap();
        assert_eq!(a, b);
        let c = generate_scenarios(SystemId::SmLike, Difficulty::Easy, 8, 23).unwrap();
        assert_ne!(a, c, "different seeds draw different sets");
    }

    #[test]
    fn difficulty_constraints_hold() {
        let medium = generate_scenarios(SystemId::SmLike, Difficulty::Medium, 3, 49).unwrap();
        for s in &medium.scenarios {
            assert_eq!(s.specs.len(), 2);
            assert_ne!(s.specs[0].target_service, s.specs[1].target_service);
        }
        let hard = generate_scenarios(SystemId::SmLike, Difficulty::Hard, 3, 80).unwrap();
        for s in &hard.scenarios {
            assert!((2..=3).contains(&s.specs.len()));
            let categories: Vec<_> = s.specs.iter().map(|x| x.failure_type.category()).collect();
            assert!(categories.iter().any(|c| *c != categories[0]));
        }
    }

    #[test]
    fn easy_scenarios_are_distinct_pairs() {
        let set = generate_scenarios(SystemId::SmLike, Difficulty::Easy, 1, 28).unwrap();
        let mut keys: Vec<String> = set
            .scenarios
            .iter()
            .map(|s| {
                format!(
                    "{}/{:?}",
                    s.specs[0].target_service, s.specs[0].failure_type
                )
            })
            .collect();
        keys.sort();
        keys.dedup();
        assert_eq!(keys.len(), 28);
    }

    #[test]
    fn capacity_overflow_is_an_error() {
        match generate_scenarios(SystemId::SmLike, Difficulty::Easy, 1, 29) {
            Err(BenchError::Capacity { available, .. }) => assert_eq!(available, 28),
            other => panic!("expected capacity error, got {other:?}"),
        }
    }

    #[test]
    fn metrics_fixture_matches_hand_computation() {
        let episode =
            |id: &str, injected: bool, success: bool, latency: f64, tokens: u64| EpisodeResult {
                scenario_id: id.to_string(),
                difficulty: Difficulty::Easy,
                failure_types: vec![FailureType::CpuSaturation],
                injected_ok: injected,
                not_injected_reason: None,
                success,
                attempts: 1,
                wall_latency_s: latency,
                tokens,
                availability_violations: 0,
                artifacts: vec![],
                outcome: None,
            };
        let results = vec![
            episode("e1", true, true, 10.0, 100),
            episode("e2", true, true, 30.0, 300),
            episode("e3", true, false, 7.0, 50),
            episode("e4", false, false, 1.0, 0),
            episode("e5", true, false, 9.0, 70),
            episode("e6", true, true, 20.0, 200),
        ];
        let m = aggregate(&results);
        assert_eq!((m.n_episodes, m.n_injected, m.n_success), (6, 5, 3));
        assert!((m.ra - 0.6).abs() < 1e-12);
        assert!((m.arl_s.unwrap() - 20.0).abs() < 1e-12);
        assert!((m.atc.unwrap() - 200.0).abs() < 1e-12);
        assert!((m.atc_all.unwrap() - 144.0).abs() < 1e-12);
    }

    #[test]
    fn zero_successes_report_absent_markers() {
        let m = aggregate(&[]);
        assert_eq!(m.ra, 0.0);
        assert!(m.arl_s.is_none());
        assert!(m.atc.is_none());
    }

    #[test]
    fn oracle_sologen_episode_succeeds_and_resets() {
        let spec = RunSpec::new(
            SystemId::SmLike,
            Difficulty::Easy,
            PolicyKind::SoloGen,
            BackendKind::Oracle,
        );
        let topo = parse_topology(SystemId::SmLike.builtin_topology()).unwrap();
        let mut state = ClusterState::from_topology(&topo);
        let baseline_fp = state.fingerprint();
        let scenario = Scenario {
            id: "t-0".into(),
            specs: vec![FailureSpec::new(FailureType::IoSaturation, "gateway")],
        };
        let backend = make_backend(&spec).unwrap();
        let r = run_episode(
            &mut state,
            &scenario,
            9,
            PolicyKind::SoloGen,
            &spec.policy_config(),
            backend.as_ref(),
            Difficulty::Easy,
        )
        .unwrap();
        assert!(
            r.injected_ok && r.success,
            "{:?}",
            r.outcome.map(|o| o.failure_detail)
        );
        assert_eq!(
            state.fingerprint(),
            baseline_fp,
            "episode must reset the cluster"
        );
    }

    #[test]
    fn failed_injection_is_excluded_from_ra_denominator() {
        let scenario = Scenario {
            id: "bad-0".into(),
            specs: vec![FailureSpec::new(
                FailureType::CpuSaturation,
                "no-such-service",
            )],
        };
        let spec = RunSpec::new(
            SystemId::SmLike,
            Difficulty::Easy,
            PolicyKind::SoloGen,
            BackendKind::Oracle,
        );
        let topo = parse_topology(SystemId::SmLike.builtin_topology()).unwrap();
        let mut state = ClusterState::from_topology(&topo);
        let backend = make_backend(&spec).unwrap();
        let r = run_episode(
            &mut state,
            &scenario,
            0,
            PolicyKind::SoloGen,
            &spec.policy_config(),
            backend.as_ref(),
            Difficulty::Easy,
        )
        .unwrap();
        assert!(!r.injected_ok);
        let m = aggregate(&[r]);
        assert_eq!(m.n_injected, 0);
        assert_eq!(m.ra, 0.0);
    }

    #[test]
    fn empty_scenario_is_rejected() {
        let spec = RunSpec::new(
            SystemId::SmLike,
            Difficulty::Easy,
            PolicyKind::SoloGen,
            BackendKind::Oracle,
        );
        let topo = parse_topology(SystemId::SmLike.builtin_topology()).unwrap();
        let mut state = ClusterState::from_topology(&topo);
        let backend = make_backend(&spec).unwrap();
        let scenario = Scenario {
            id: "empty".into(),
            specs: vec![],
        };
        assert!(matches!(
            run_episode(
                &mut state,
                &scenario,
                0,
                PolicyKind::SoloGen,
                &spec.policy_config(),
                backend.as_ref(),
                Difficulty::Easy,
            ),
            Err(BenchError::EmptyScenario(_))
        ));
    }

    // Pool size must not leak into results: per-episode seeds are positional
    // and collection is order-preserving.
    #[test]
    fn worker_pool_size_does_not_change_results() {
        let mut spec = RunSpec::new(
            SystemId::SmLike,
            Difficulty::Medium,
            PolicyKind::ThinkRemed,
            BackendKind::NaiveThenOracle,
        );
        spec.seed = 11;
        spec.count = Some(6);
        let sequential = run_benchmark(&spec, None).unwrap();
        spec.jobs = 4;
        let pooled = run_benchmark(&spec, None).unwrap();
        let strip = |run: &RunOutput| {
            let mut episodes = run.episodes.clone();
            for e in &mut episodes {
                e.wall_latency_s = 0.0;
                if let Some(o) = &mut e.outcome {
                    o.wall_latency_s = 0.0;
                    o.attempt_latencies_s.clear();
                }
            }
            episodes
        };
        assert_eq!(strip(&sequential), strip(&pooled));
        assert_eq!(sequential.summary.ra, pooled.summary.ra);
    }

    struct PanickingBackend;

    impl crate::policy::ModelBackend for PanickingBackend {
        fn complete(
            &self,
            _messages: &[crate::policy::ChatMessage],
            _timeout_s: u64,
        ) -> Result<crate::policy::Completion, crate::policy::BackendError> {
            panic!("backend blew up");
        }
        fn name(&self) -> &'static str {
            "panicking"
        }
    }

    // Policy crashes become recorded failures; the run (and the cluster)
    // survive them.
    #[test]
    fn panicking_policy_is_recorded_not_fatal() {
        let topo = parse_topology(SystemId::SmLike.builtin_topology()).unwrap();
        let mut state = ClusterState::from_topology(&topo);
        let baseline_fp = state.fingerprint();
        let scenario = Scenario {
            id: "boom".into(),
            specs: vec![FailureSpec::new(FailureType::NetworkDelay, "gateway")],
        };
        let r = run_episode(
            &mut state,
            &scenario,
            0,
            PolicyKind::SoloGen,
            &PolicyConfig::default(),
            &PanickingBackend,
            Difficulty::Easy,
        )
        .unwrap();
        assert!(r.injected_ok);
        assert!(!r.success);
        let detail = r.outcome.unwrap().failure_detail.unwrap();
        assert!(detail.contains("panicked"), "{detail}");
        assert_eq!(state.fingerprint(), baseline_fp);
    }

    #[test]
    fn remote_backend_requires_endpoint_and_model() {
        let spec = RunSpec::new(
            SystemId::SmLike,
            Difficulty::Easy,
            PolicyKind::SoloGen,
            BackendKind::Remote,
        );
        assert!(matches!(make_backend(&spec), Err(BenchError::Config(_))));
    }
}
