//! Deterministic benchmark harness for end-to-end microservice remediation.
//!
//! The crate simulates a namespaced microservice cluster, injects seven kinds
//! of failures into it (resource stress, network degradation, pod kills, and
//! configuration corruption), hands a structured failure report to a pluggable
//! remediation policy, executes the Ansible-dialect playbook the policy
//! produces through a kubectl-style command interpreter, verifies recovery
//! with targeted ground-truth checks, and aggregates remediation accuracy,
//! latency, and token-cost metrics across scenario suites.
//!
//! Everything is deterministic under a seed: identical runs with scripted
//! policy backends produce byte-identical reports.

pub mod bench;
pub mod chaos;
pub mod cluster;
pub mod kubecmd;
pub mod playbook;
pub mod policy;
pub mod verify;

pub use bench::{
    aggregate, generate_scenarios, run_benchmark, Difficulty, EpisodeResult, MetricsSummary,
    RunSpec, ScenarioSet,
};
pub use chaos::{effect_table, inject, FailureSpec, FailureType, InjectionRecord};
pub use cluster::{
    load_topology, ClusterState, Deployment, PodInstance, PodPhase, ResourceQuantity, SystemId,
};
pub use kubecmd::{execute, parse_command, CmdResult, Command};
pub use playbook::{parse_playbook, run_playbook, Inventory, Playbook, Transcript};
pub use policy::{
    parse_model_output, sologen, thinkremed, ChatMessage, FailureReport, ModelBackend,
    PolicyConfig, PolicyOutcome,
};
pub use verify::{verify, verify_all, VerifyOutcome};
