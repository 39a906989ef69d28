//! Deterministic state machine for a namespaced microservice cluster.
//!
//! The cluster holds deployments, pod instances, chaos objects, and per-service
//! link state. All mutation goes through [`ClusterState::reconcile`], which
//! emulates controller behavior: it replaces pods whose generation is stale,
//! tops deployments up to their desired replica count, and applies active
//! pod-kill chaos. Observed metrics are never stored; [`ClusterState::observe`]
//! recomputes them from base load plus active chaos effects.

pub mod quantity;
pub mod topology;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use thiserror::Error;

pub use quantity::{QuantityError, ResourceQuantity};
pub use topology::{parse_topology, ServiceGraph, SystemId, Topology, TopologyError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContainerSpec {
    pub image: String,
    pub requests_cpu: ResourceQuantity,
    pub limits_cpu: ResourceQuantity,
    pub requests_mem: ResourceQuantity,
    pub limits_mem: ResourceQuantity,
    pub env: IndexMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub name: String,
    pub namespace: String,
    pub desired_replicas: u32,
    pub template: ContainerSpec,
    /// Strictly increasing; bumped by rollout restarts and template edits.
    pub generation: u64,
    pub annotations: BTreeMap<String, String>,
    /// Monotonic counter feeding deterministic pod names.
    pub next_pod_seq: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PodPhase {
    Running,
    Pending,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodInstance {
    /// `<deployment>-<generation>-<seq>`, unique cluster-wide.
    pub uid: String,
    pub deployment: String,
    pub generation: u64,
    pub seq: u64,
    pub phase: PodPhase,
    pub ready: bool,
    pub base_cpu_millis: u64,
    pub base_mem_mib: u64,
    pub restart_count: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChaosKind {
    StressChaos,
    NetworkChaos,
    PodChaos,
}

impl ChaosKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ChaosKind::StressChaos => "StressChaos",
            ChaosKind::NetworkChaos => "NetworkChaos",
            ChaosKind::PodChaos => "PodChaos",
        }
    }

    /// Lowercase resource name used on the command line.
    pub fn resource(self) -> &'static str {
        match self {
            ChaosKind::StressChaos => "stresschaos",
            ChaosKind::NetworkChaos => "networkchaos",
            ChaosKind::PodChaos => "podchaos",
        }
    }
}

/// A chaos custom resource. Visible and deletable through the command
/// interpreter, which gives remediation agents a second repair path besides
/// counteracting the effect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosObject {
    pub kind: ChaosKind,
    pub name: String,
    pub namespace: String,
    pub selector_service: String,
    /// Kind-specific parameters: `stress_cpu_millis`, `stress_mem_mib`,
    /// `io_wait_pct` for StressChaos; `loss_pct`, `delay_ms` for NetworkChaos;
    /// `fraction` for PodChaos.
    pub params: BTreeMap<String, f64>,
}

impl ChaosObject {
    fn param(&self, key: &str) -> f64 {
        self.params.get(key).copied().unwrap_or(0.0)
    }
}

/// Baseline link attributes for one service. Chaos effects are layered on top
/// at observation time, so deleting a NetworkChaos object restores the link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkState {
    pub service: String,
    pub loss_pct: f64,
    pub delay_ms: f64,
}

/// Serialized cluster snapshot plus a topology fingerprint guarding restores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotHandle {
    pub topology_fingerprint: String,
    state_json: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterState {
    pub namespace: String,
    pub deployments: BTreeMap<String, Deployment>,
    pub pods: Vec<PodInstance>,
    pub chaos: Vec<ChaosObject>,
    pub links: BTreeMap<String, LinkState>,
    /// Simulated seconds; advances one tick per executed playbook task.
    pub clock_s: f64,
    pub baseline: Option<Box<SnapshotHandle>>,
    pub topology: ServiceGraph,
    /// Env each service requires to report ready. Pods of a deployment whose
    /// template diverges from this contract come up not ready.
    pub required_env: BTreeMap<String, IndexMap<String, String>>,
    /// Nominal (cpu millis, mem MiB) load each service's pods carry.
    pub base_load: BTreeMap<String, (u64, u64)>,
}

#[derive(Debug, Error)]
pub enum ClusterError {
    #[error("unknown service {0:?}")]
    UnknownService(String),
    #[error("snapshot was taken from a different topology ({handle} != {state})")]
    TopologyMismatch { handle: String, state: String },
    #[error("corrupt snapshot payload: {0}")]
    CorruptSnapshot(String),
}

/// Per-pod view returned by [`ClusterState::observe`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PodMetrics {
    pub uid: String,
    pub phase: PodPhase,
    pub ready: bool,
    pub restart_count: u32,
    pub cpu_millis_used: u64,
    pub cpu_fraction: f64,
    pub mem_mib_used: u64,
    pub mem_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceMetrics {
    pub service: String,
    pub desired_replicas: u32,
    pub ready_count: u32,
    pub pods: Vec<PodMetrics>,
    pub io_wait_pct: f64,
    pub loss_pct: f64,
    pub delay_ms: f64,
}

/// Build a cluster from a topology document: one deployment per declared
/// service at generation 1, reconciled into a fully ready pod set, with the
/// baseline snapshot captured and the clock at zero.
pub fn load_topology(text: &str) -> Result<ClusterState, TopologyError> {
    let topo = parse_topology(text)?;
    Ok(ClusterState::from_topology(&topo))
}

impl ClusterState {
    pub fn from_topology(topo: &Topology) -> Self {
        let mut deployments = BTreeMap::new();
        let mut links = BTreeMap::new();
        let mut required_env = BTreeMap::new();
        for svc in &topo.services {
            deployments.insert(
                svc.name.clone(),
                Deployment {
                    name: svc.name.clone(),
                    namespace: topo.namespace.clone(),
                    desired_replicas: svc.replicas,
                    template: ContainerSpec {
                        image: svc.image.clone(),
                        requests_cpu: svc.requests_cpu,
                        limits_cpu: svc.limits_cpu,
                        requests_mem: svc.requests_mem,
                        limits_mem: svc.limits_mem,
                        env: svc.env.clone(),
                    },
                    generation: 1,
                    annotations: BTreeMap::new(),
                    next_pod_seq: 0,
                },
            );
            links.insert(
                svc.name.clone(),
                LinkState {
                    service: svc.name.clone(),
                    loss_pct: 0.0,
                    delay_ms: svc.base_latency_ms,
                },
            );
            required_env.insert(svc.name.clone(), svc.env.clone());
        }

        let base_load: BTreeMap<String, (u64, u64)> = topo
            .services
            .iter()
            .map(|s| (s.name.clone(), (s.base_cpu_millis, s.base_mem_mib)))
            .collect();

        let mut state = ClusterState {
            namespace: topo.namespace.clone(),
            deployments,
            pods: Vec::new(),
            chaos: Vec::new(),
            links,
            clock_s: 0.0,
            baseline: None,
            topology: topo.graph(),
            required_env,
            base_load,
        };
        state.reconcile();
        state.baseline = Some(Box::new(state.snapshot()));
        state
    }

    /// Sum of active stress effects targeting `service`.
    fn stress_totals(&self, service: &str) -> (u64, u64, f64) {
        let mut cpu = 0u64;
        let mut mem = 0u64;
        let mut io = 0f64;
        for c in &self.chaos {
            if c.kind == ChaosKind::StressChaos && c.selector_service == service {
                cpu += c.param("stress_cpu_millis") as u64;
                mem += c.param("stress_mem_mib") as u64;
                io += c.param("io_wait_pct");
            }
        }
        (cpu, mem, io)
    }

    fn pod_kill_count(&self, deployment: &Deployment) -> usize {
        let mut kill = 0usize;
        for c in &self.chaos {
            if c.kind == ChaosKind::PodChaos && c.selector_service == deployment.name {
                let fraction = c.param("fraction").clamp(0.0, 1.0);
                let k = (fraction * deployment.desired_replicas as f64).ceil() as usize;
                kill = kill.max(k.max(1).min(deployment.desired_replicas as usize));
            }
        }
        kill
    }

    fn env_contract_ok(&self, deployment: &Deployment) -> bool {
        match self.required_env.get(&deployment.name) {
            Some(required) => required
                .iter()
                .all(|(k, v)| deployment.template.env.get(k) == Some(v)),
            None => true,
        }
    }

    /// Drive pods toward the declared state. Total and idempotent:
    /// stale-generation pods are replaced, deployments are topped up to their
    /// desired replica count, and active PodChaos pins its share of pods
    /// Failed (replacements are re-killed on the next pass).
    pub fn reconcile(&mut self) {
        let names: Vec<String> = self.deployments.keys().cloned().collect();
        for name in names {
            let dep = self.deployments.get(&name).unwrap().clone();
            let kill_count = self.pod_kill_count(&dep);
            let env_ok = self.env_contract_ok(&dep);

            // stale generations are rolled: their pods disappear
            self.pods
                .retain(|p| p.deployment != name || p.generation == dep.generation);
            // without PodChaos there is nothing keeping Failed pods around
            if kill_count == 0 {
                self.pods
                    .retain(|p| p.deployment != name || p.phase != PodPhase::Failed);
            }

            let mut count = self.pods.iter().filter(|p| p.deployment == name).count();
            let desired = dep.desired_replicas as usize;
            while count > desired {
                // scale down removes the newest pod first
                let newest = self
                    .pods
                    .iter()
                    .enumerate()
                    .filter(|(_, p)| p.deployment == name)
                    .max_by_key(|(_, p)| p.seq)
                    .map(|(i, _)| i)
                    .unwrap();
                self.pods.remove(newest);
                count -= 1;
            }
            let (base_cpu, base_mem) = self.base_load.get(&name).copied().unwrap_or((0, 0));
            while count < desired {
                let seq = {
                    let dep = self.deployments.get_mut(&name).unwrap();
                    let seq = dep.next_pod_seq;
                    dep.next_pod_seq += 1;
                    seq
                };
                self.pods.push(PodInstance {
                    uid: format!("{}-{}-{}", name, dep.generation, seq),
                    deployment: name.clone(),
                    generation: dep.generation,
                    seq,
                    phase: PodPhase::Running,
                    ready: true,
                    base_cpu_millis: base_cpu,
                    base_mem_mib: base_mem,
                    restart_count: 0,
                });
                count += 1;
            }

            // PodChaos pins the oldest kill_count pods Failed
            let mut killed = 0usize;
            for p in self
                .pods
                .iter_mut()
                .filter(|p| p.deployment == name)
                .collect::<Vec<_>>()
                .into_iter()
            {
                if killed < kill_count {
                    if p.phase != PodPhase::Failed {
                        p.phase = PodPhase::Failed;
                        p.restart_count += 1;
                    }
                    p.ready = false;
                    killed += 1;
                } else {
                    p.phase = PodPhase::Running;
                    p.ready = env_ok;
                }
            }
        }
        self.pods
            .sort_by(|a, b| (a.deployment.as_str(), a.seq).cmp(&(b.deployment.as_str(), b.seq)));
    }

    /// Pure read of per-pod resource usage and link health for one service.
    pub fn observe(&self, service: &str) -> Result<ServiceMetrics, ClusterError> {
        let dep = self
            .deployments
            .get(service)
            .ok_or_else(|| ClusterError::UnknownService(service.to_string()))?;
        let (stress_cpu, stress_mem, stress_io) = self.stress_totals(service);

        let limits_cpu = dep.template.limits_cpu.millis;
        let limits_mem = dep.template.limits_mem.millis;
        let pods = self
            .pods
            .iter()
            .filter(|p| p.deployment == service)
            .map(|p| {
                let (cpu_used, mem_used) = if p.phase == PodPhase::Failed {
                    (0, 0)
                } else {
                    (
                        (p.base_cpu_millis + stress_cpu).min(limits_cpu),
                        (p.base_mem_mib + stress_mem).min(limits_mem),
                    )
                };
                PodMetrics {
                    uid: p.uid.clone(),
                    phase: p.phase,
                    ready: p.ready,
                    restart_count: p.restart_count,
                    cpu_millis_used: cpu_used,
                    cpu_fraction: fraction(cpu_used, limits_cpu),
                    mem_mib_used: mem_used,
                    mem_fraction: fraction(mem_used, limits_mem),
                }
            })
            .collect::<Vec<_>>();

        let link = self.links.get(service);
        let (mut loss, mut delay) = link.map(|l| (l.loss_pct, l.delay_ms)).unwrap_or((0.0, 0.0));
        for c in &self.chaos {
            if c.kind == ChaosKind::NetworkChaos && c.selector_service == service {
                loss += c.param("loss_pct");
                delay += c.param("delay_ms");
            }
        }

        Ok(ServiceMetrics {
            service: service.to_string(),
            desired_replicas: dep.desired_replicas,
            ready_count: pods.iter().filter(|p| p.ready).count() as u32,
            pods,
            io_wait_pct: stress_io.min(100.0),
            loss_pct: loss.clamp(0.0, 100.0),
            delay_ms: delay,
        })
    }

    pub fn topology_fingerprint(&self) -> String {
        let mut services = self.topology.services.clone();
        services.sort();
        format!(
            "{}/{}/{}",
            self.topology.system_id,
            self.namespace,
            services.join(",")
        )
    }

    /// Capture the full cluster state (baseline handle excluded).
    pub fn snapshot(&self) -> SnapshotHandle {
        let mut copy = self.clone();
        copy.baseline = None;
        SnapshotHandle {
            topology_fingerprint: self.topology_fingerprint(),
            state_json: serde_json::to_string(&copy).expect("cluster state serializes"),
        }
    }

    /// Restore a snapshot. The live clock and baseline handle survive the
    /// restore; everything else returns to the captured state.
    pub fn reset(&mut self, handle: &SnapshotHandle) -> Result<(), ClusterError> {
        if handle.topology_fingerprint != self.topology_fingerprint() {
            return Err(ClusterError::TopologyMismatch {
                handle: handle.topology_fingerprint.clone(),
                state: self.topology_fingerprint(),
            });
        }
        let mut restored: ClusterState = serde_json::from_str(&handle.state_json)
            .map_err(|e| ClusterError::CorruptSnapshot(e.to_string()))?;
        restored.clock_s = self.clock_s;
        restored.baseline = self.baseline.take();
        *self = restored;
        Ok(())
    }

    pub fn reset_to_baseline(&mut self) -> Result<(), ClusterError> {
        let baseline = self
            .baseline
            .clone()
            .ok_or_else(|| ClusterError::CorruptSnapshot("no baseline captured".into()))?;
        self.reset(&baseline)
    }

    /// Canonical serialized form with the clock and baseline blanked; used for
    /// structural-equality checks and read-only guards.
    pub fn fingerprint(&self) -> String {
        let mut copy = self.clone();
        copy.clock_s = 0.0;
        copy.baseline = None;
        serde_json::to_string(&copy).expect("cluster state serializes")
    }

    pub fn tick(&mut self, seconds: f64) {
        self.clock_s += seconds;
    }

    pub fn pods_of<'a>(&'a self, service: &'a str) -> impl Iterator<Item = &'a PodInstance> + 'a {
        self.pods.iter().filter(move |p| p.deployment == service)
    }
}

fn fraction(used: u64, limit: u64) -> f64 {
    if limit == 0 {
        0.0
    } else {
        used as f64 / limit as f64
    }
}
