//! Failure injection engine: seven failure types across three categories,
//! injected either as chaos objects (runtime perturbation) or by corrupting
//! deployment configuration, with ground-truth records emitted for targeted
//! verification.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

use crate::cluster::{ChaosKind, ChaosObject, ClusterState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FailureType {
    CpuSaturation,
    MemSaturation,
    IoSaturation,
    NetworkLoss,
    NetworkDelay,
    PodFailure,
    ConfigError,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureCategory {
    Resource,
    Network,
    Application,
}

impl FailureType {
    pub const ALL: [FailureType; 7] = [
        FailureType::CpuSaturation,
        FailureType::MemSaturation,
        FailureType::IoSaturation,
        FailureType::NetworkLoss,
        FailureType::NetworkDelay,
        FailureType::PodFailure,
        FailureType::ConfigError,
    ];

    pub fn category(self) -> FailureCategory {
        match self {
            FailureType::CpuSaturation | FailureType::MemSaturation | FailureType::IoSaturation => {
                FailureCategory::Resource
            }
            FailureType::NetworkLoss | FailureType::NetworkDelay => FailureCategory::Network,
            FailureType::PodFailure | FailureType::ConfigError => FailureCategory::Application,
        }
    }

    /// Human-readable name used in failure reports.
    pub fn display_name(self) -> &'static str {
        match self {
            FailureType::CpuSaturation => "CPU Saturation",
            FailureType::MemSaturation => "Memory Saturation",
            FailureType::IoSaturation => "IO Saturation",
            FailureType::NetworkLoss => "Network Loss",
            FailureType::NetworkDelay => "Network Delay",
            FailureType::PodFailure => "Pod Failure",
            FailureType::ConfigError => "Configuration Error",
        }
    }

    pub fn from_display_name(name: &str) -> Option<Self> {
        FailureType::ALL
            .into_iter()
            .find(|t| t.display_name() == name.trim())
    }

    /// Kebab slug used for deterministic chaos object names.
    pub fn slug(self) -> &'static str {
        match self {
            FailureType::CpuSaturation => "cpu-saturation",
            FailureType::MemSaturation => "memory-saturation",
            FailureType::IoSaturation => "io-saturation",
            FailureType::NetworkLoss => "network-loss",
            FailureType::NetworkDelay => "network-delay",
            FailureType::PodFailure => "pod-failure",
            FailureType::ConfigError => "configuration-error",
        }
    }

    pub fn chaos_kind(self) -> Option<ChaosKind> {
        match self {
            FailureType::CpuSaturation | FailureType::MemSaturation | FailureType::IoSaturation => {
                Some(ChaosKind::StressChaos)
            }
            FailureType::NetworkLoss | FailureType::NetworkDelay => Some(ChaosKind::NetworkChaos),
            FailureType::PodFailure => Some(ChaosKind::PodChaos),
            FailureType::ConfigError => None,
        }
    }
}

impl fmt::Display for FailureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.display_name())
    }
}

/// What to inject. `params` may override the default magnitudes
/// (`stress_cpu_millis`, `stress_mem_mib`, `io_wait_pct`, `loss_pct`,
/// `delay_ms`, `fraction`, `env_key`); anything omitted takes the default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureSpec {
    pub failure_type: FailureType,
    pub target_service: String,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub params: BTreeMap<String, Value>,
}

impl FailureSpec {
    pub fn new(failure_type: FailureType, target_service: impl Into<String>) -> Self {
        FailureSpec {
            failure_type,
            target_service: target_service.into(),
            params: BTreeMap::new(),
        }
    }

    fn param_f64(&self, key: &str) -> Option<f64> {
        self.params.get(key).and_then(Value::as_f64)
    }

    fn param_str(&self, key: &str) -> Option<&str> {
        self.params.get(key).and_then(Value::as_str)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorruptedEnv {
    pub key: String,
    pub bad_value: String,
    pub baseline_value: String,
}

/// Ground truth of one injection, handed to the verifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionRecord {
    pub spec: FailureSpec,
    pub injected_ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chaos_object_name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupted_env: Option<CorruptedEnv>,
    pub injected_at_clock: f64,
}

#[derive(Debug, Error)]
pub enum InjectError {
    #[error("conflicting injection: {0} already active on {1}")]
    Conflict(FailureType, String),
    #[error("service {0:?} declares no env to corrupt")]
    NoEnvToCorrupt(String),
    #[error("no baseline snapshot captured before injection")]
    NoBaseline,
}

/// Default injection magnitudes. Stress is sized at 90% of the current limit
/// so the fault trips its verification threshold decisively while doubling
/// the limit remains a legitimate fix.
pub const STRESS_FRACTION_OF_LIMIT: f64 = 0.9;
pub const DEFAULT_IO_WAIT_PCT: f64 = 60.0;
pub const DEFAULT_LOSS_PCT: f64 = 40.0;
pub const DEFAULT_DELAY_MS: f64 = 300.0;
pub const DEFAULT_POD_FRACTION: f64 = 1.0;

pub fn chaos_object_name(failure_type: FailureType, service: &str) -> String {
    format!("{}-{}", failure_type.slug(), service)
}

/// Inject one failure. Unknown targets produce an `injected_ok = false` record
/// (the scenario is then excluded from accuracy denominators); a second
/// injection of the same type on the same target is a hard error.
pub fn inject(
    state: &mut ClusterState,
    spec: &FailureSpec,
    seed: u64,
) -> Result<InjectionRecord, InjectError> {
    if state.baseline.is_none() {
        return Err(InjectError::NoBaseline);
    }
    let clock = state.clock_s;
    let not_injected = |reason: String| InjectionRecord {
        spec: spec.clone(),
        injected_ok: false,
        reason: Some(reason),
        chaos_object_name: None,
        corrupted_env: None,
        injected_at_clock: clock,
    };

    if !state.deployments.contains_key(&spec.target_service) {
        return Ok(not_injected(format!(
            "unknown target service {:?}",
            spec.target_service
        )));
    }

    let record = match spec.failure_type {
        FailureType::CpuSaturation | FailureType::MemSaturation | FailureType::IoSaturation => {
            inject_stress(state, spec)?
        }
        FailureType::NetworkLoss | FailureType::NetworkDelay => inject_network(state, spec)?,
        FailureType::PodFailure => inject_pod_failure(state, spec)?,
        FailureType::ConfigError => inject_config_error(state, spec, seed)?,
    };
    Ok(record)
}

fn push_chaos(
    state: &mut ClusterState,
    spec: &FailureSpec,
    kind: ChaosKind,
    params: BTreeMap<String, f64>,
) -> Result<String, InjectError> {
    let name = chaos_object_name(spec.failure_type, &spec.target_service);
    if state.chaos.iter().any(|c| c.name == name) {
        return Err(InjectError::Conflict(
            spec.failure_type,
            spec.target_service.clone(),
        ));
    }
    state.chaos.push(ChaosObject {
        kind,
        name: name.clone(),
        namespace: state.namespace.clone(),
        selector_service: spec.target_service.clone(),
        params,
    });
    state.chaos.sort_by(|a, b| a.name.cmp(&b.name));
    state.reconcile();
    Ok(name)
}

fn base_record(spec: &FailureSpec, state: &ClusterState, name: String) -> InjectionRecord {
    InjectionRecord {
        spec: spec.clone(),
        injected_ok: true,
        reason: None,
        chaos_object_name: Some(name),
        corrupted_env: None,
        injected_at_clock: state.clock_s,
    }
}

fn inject_stress(
    state: &mut ClusterState,
    spec: &FailureSpec,
) -> Result<InjectionRecord, InjectError> {
    let template = &state.deployments[&spec.target_service].template;
    let mut params = BTreeMap::new();
    match spec.failure_type {
        FailureType::CpuSaturation => {
            let default = (template.limits_cpu.millis as f64 * STRESS_FRACTION_OF_LIMIT).round();
            params.insert(
                "stress_cpu_millis".to_string(),
                spec.param_f64("stress_cpu_millis").unwrap_or(default),
            );
        }
        FailureType::MemSaturation => {
            let default = (template.limits_mem.millis as f64 * STRESS_FRACTION_OF_LIMIT).round();
            params.insert(
                "stress_mem_mib".to_string(),
                spec.param_f64("stress_mem_mib").unwrap_or(default),
            );
        }
        FailureType::IoSaturation => {
            params.insert(
                "io_wait_pct".to_string(),
                spec.param_f64("io_wait_pct").unwrap_or(DEFAULT_IO_WAIT_PCT),
            );
        }
        _ => unreachable!(),
    }
    let name = push_chaos(state, spec, ChaosKind::StressChaos, params)?;
    Ok(base_record(spec, state, name))
}

fn inject_network(
    state: &mut ClusterState,
    spec: &FailureSpec,
) -> Result<InjectionRecord, InjectError> {
    let mut params = BTreeMap::new();
    match spec.failure_type {
        FailureType::NetworkLoss => {
            params.insert(
                "loss_pct".to_string(),
                spec.param_f64("loss_pct").unwrap_or(DEFAULT_LOSS_PCT),
            );
        }
        FailureType::NetworkDelay => {
            params.insert(
                "delay_ms".to_string(),
                spec.param_f64("delay_ms").unwrap_or(DEFAULT_DELAY_MS),
            );
        }
        _ => unreachable!(),
    }
    let name = push_chaos(state, spec, ChaosKind::NetworkChaos, params)?;
    Ok(base_record(spec, state, name))
}

fn inject_pod_failure(
    state: &mut ClusterState,
    spec: &FailureSpec,
) -> Result<InjectionRecord, InjectError> {
    let fraction = spec
        .param_f64("fraction")
        .unwrap_or(DEFAULT_POD_FRACTION)
        .clamp(0.0, 1.0);
    let params = BTreeMap::from([("fraction".to_string(), fraction)]);
    let name = push_chaos(state, spec, ChaosKind::PodChaos, params)?;
    Ok(base_record(spec, state, name))
}

fn inject_config_error(
    state: &mut ClusterState,
    spec: &FailureSpec,
    seed: u64,
) -> Result<InjectionRecord, InjectError> {
    let dep = state.deployments.get(&spec.target_service).unwrap();
    if dep.template.env.values().any(|v| v.starts_with("INVALID_")) {
        return Err(InjectError::Conflict(
            FailureType::ConfigError,
            spec.target_service.clone(),
        ));
    }
    if dep.template.env.is_empty() {
        return Err(InjectError::NoEnvToCorrupt(spec.target_service.clone()));
    }
    let key = match spec.param_str("env_key") {
        Some(k) if dep.template.env.contains_key(k) => k.to_string(),
        Some(k) => {
            return Ok(InjectionRecord {
                spec: spec.clone(),
                injected_ok: false,
                reason: Some(format!("env key {k:?} not declared on target")),
                chaos_object_name: None,
                corrupted_env: None,
                injected_at_clock: state.clock_s,
            })
        }
        None => {
            let keys: Vec<&String> = dep.template.env.keys().collect();
            keys[(seed as usize) % keys.len()].clone()
        }
    };
    let baseline_value = dep.template.env[&key].clone();
    let bad_value = format!("INVALID_{baseline_value}");

    let dep = state.deployments.get_mut(&spec.target_service).unwrap();
    dep.template.env.insert(key.clone(), bad_value.clone());
    dep.generation += 1;
    state.reconcile();

    Ok(InjectionRecord {
        spec: spec.clone(),
        injected_ok: true,
        reason: None,
        chaos_object_name: None,
        corrupted_env: Some(CorruptedEnv {
            key,
            bad_value,
            baseline_value,
        }),
        injected_at_clock: state.clock_s,
    })
}

/// Which remediation paths undo a failure type. The first entry is the one
/// scripted oracle policies take, so the table doubles as a living statement
/// of how each fault is meant to be fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RemediationPath {
    RaiseCpuLimitAndRestart,
    RaiseMemLimitAndRestart,
    DeleteChaosObject,
    RestoreEnvAndRestart,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EffectDescriptor {
    pub failure_type: FailureType,
    pub category: FailureCategory,
    /// State the fault perturbs, as seen through observation.
    pub perturbs: Vec<&'static str>,
    pub remediable_by: Vec<RemediationPath>,
}

pub fn effect_table(failure_type: FailureType) -> EffectDescriptor {
    use RemediationPath::*;
    let (perturbs, remediable_by): (Vec<&'static str>, Vec<RemediationPath>) = match failure_type {
        FailureType::CpuSaturation => (
            vec!["pod cpu utilization"],
            vec![RaiseCpuLimitAndRestart, DeleteChaosObject],
        ),
        FailureType::MemSaturation => (
            vec!["pod memory fraction"],
            vec![RaiseMemLimitAndRestart, DeleteChaosObject],
        ),
        FailureType::IoSaturation => (vec!["service io wait"], vec![DeleteChaosObject]),
        FailureType::NetworkLoss => (vec!["link packet loss"], vec![DeleteChaosObject]),
        FailureType::NetworkDelay => (vec!["link latency"], vec![DeleteChaosObject]),
        FailureType::PodFailure => (vec!["pod phase", "ready count"], vec![DeleteChaosObject]),
        FailureType::ConfigError => (
            vec!["template env", "pod readiness"],
            vec![RestoreEnvAndRestart],
        ),
    };
    EffectDescriptor {
        failure_type,
        category: failure_type.category(),
        perturbs,
        remediable_by,
    }
}
