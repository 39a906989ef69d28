//! Targeted status verification: given the ground truth of what was injected,
//! decide deterministically whether the fault is remediated. Each failure type
//! gets its own predicate over observed state, so the verdict does not depend
//! on any anomaly-detection heuristics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chaos::{FailureType, InjectionRecord};
use crate::cluster::{ClusterState, PodPhase};

/// Thresholds the predicates compare against. Injections are sized to trip
/// these decisively; legitimate fixes pass them with margin.
pub const CPU_UTIL_THRESHOLD: f64 = 0.8;
pub const MEM_FRACTION_THRESHOLD: f64 = 0.8;
pub const IO_WAIT_THRESHOLD_PCT: f64 = 20.0;
pub const LOSS_THRESHOLD_PCT: f64 = 1.0;
pub const DELAY_SLACK_MS: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyCheck {
    pub name: String,
    pub observed: String,
    pub threshold: String,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyOutcome {
    pub passed: bool,
    pub checks: Vec<VerifyCheck>,
    pub detail: String,
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("record was not successfully injected; nothing to verify")]
    NotInjected,
    #[error("target service vanished: {0}")]
    MissingTarget(String),
}

fn check(name: &str, observed: impl ToString, threshold: impl ToString, ok: bool) -> VerifyCheck {
    VerifyCheck {
        name: name.to_string(),
        observed: observed.to_string(),
        threshold: threshold.to_string(),
        ok,
    }
}

/// Decide whether the fault described by `record` is remediated in `state`.
/// Pure read: the cluster is not touched.
pub fn verify(
    state: &ClusterState,
    record: &InjectionRecord,
) -> Result<VerifyOutcome, VerifyError> {
    if !record.injected_ok {
        return Err(VerifyError::NotInjected);
    }
    let service = &record.spec.target_service;
    let metrics = state
        .observe(service)
        .map_err(|_| VerifyError::MissingTarget(service.clone()))?;
    // ready == desired, and at least one pod: scaling a service away must
    // not count as remediating it
    let ready_ok = metrics.ready_count == metrics.desired_replicas && metrics.ready_count > 0;
    let ready_check = check(
        "ready_replicas",
        format!("{}/{}", metrics.ready_count, metrics.desired_replicas),
        "ready == desired >= 1",
        ready_ok,
    );

    let mut checks = Vec::new();
    match record.spec.failure_type {
        FailureType::CpuSaturation => {
            let max_util = metrics
                .pods
                .iter()
                .map(|p| p.cpu_fraction)
                .fold(0.0f64, f64::max);
            checks.push(check(
                "max_cpu_utilization",
                format!("{max_util:.3}"),
                format!("< {CPU_UTIL_THRESHOLD}"),
                max_util < CPU_UTIL_THRESHOLD,
            ));
            checks.push(ready_check);
        }
        FailureType::MemSaturation => {
            let max_frac = metrics
                .pods
                .iter()
                .map(|p| p.mem_fraction)
                .fold(0.0f64, f64::max);
            checks.push(check(
                "max_mem_fraction",
                format!("{max_frac:.3}"),
                format!("< {MEM_FRACTION_THRESHOLD}"),
                max_frac < MEM_FRACTION_THRESHOLD,
            ));
            checks.push(ready_check);
        }
        FailureType::IoSaturation => {
            checks.push(check(
                "io_wait_pct",
                format!("{:.1}", metrics.io_wait_pct),
                format!("< {IO_WAIT_THRESHOLD_PCT}"),
                metrics.io_wait_pct < IO_WAIT_THRESHOLD_PCT,
            ));
            checks.push(ready_check);
        }
        FailureType::NetworkLoss => {
            checks.push(check(
                "loss_pct",
                format!("{:.1}", metrics.loss_pct),
                format!("<= {LOSS_THRESHOLD_PCT}"),
                metrics.loss_pct <= LOSS_THRESHOLD_PCT,
            ));
        }
        FailureType::NetworkDelay => {
            let base = state.links.get(service).map(|l| l.delay_ms).unwrap_or(0.0);
            checks.push(check(
                "delay_ms",
                format!("{:.1}", metrics.delay_ms),
                format!("<= base {base:.1} + {DELAY_SLACK_MS}"),
                metrics.delay_ms <= base + DELAY_SLACK_MS,
            ));
        }
        FailureType::PodFailure => {
            let failed = state
                .pods_of(service)
                .filter(|p| p.phase == PodPhase::Failed)
                .count();
            checks.push(check("failed_pods", failed, "== 0", failed == 0));
            checks.push(ready_check);
        }
        FailureType::ConfigError => {
            let corrupted = record
                .corrupted_env
                .as_ref()
                .expect("config error records carry the corrupted env");
            let current = state
                .deployments
                .get(service)
                .and_then(|d| d.template.env.get(&corrupted.key))
                .cloned()
                .unwrap_or_default();
            checks.push(check(
                &format!("env[{}]", corrupted.key),
                &current,
                format!("== {:?}", corrupted.baseline_value),
                current == corrupted.baseline_value,
            ));
            checks.push(ready_check);
        }
    }

    let passed = checks.iter().all(|c| c.ok);
    let detail = checks
        .iter()
        .map(|c| {
            format!(
                "{} {}: observed {} (want {})",
                if c.ok { "ok" } else { "FAIL" },
                c.name,
                c.observed,
                c.threshold
            )
        })
        .collect::<Vec<_>>()
        .join("; ");
    Ok(VerifyOutcome {
        passed,
        checks,
        detail: format!(
            "{} on {}: {}",
            record.spec.failure_type.display_name(),
            service,
            detail
        ),
    })
}

/// Element-wise [`verify`] over several records; an episode succeeds only if
/// every outcome passes.
pub fn verify_all(
    state: &ClusterState,
    records: &[InjectionRecord],
) -> Result<Vec<VerifyOutcome>, VerifyError> {
    records.iter().map(|r| verify(state, r)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::{inject, FailureSpec};
    use crate::cluster::{load_topology, topology};
    use crate::kubecmd::exec_line;

    #[test]
    fn cpu_fails_post_injection_and_passes_after_limit_raise() {
        let mut state = load_topology(topology::TT_LIKE).unwrap();
        let record = inject(
            &mut state,
            &FailureSpec::new(FailureType::CpuSaturation, "ts-news-service"),
            0,
        )
        .unwrap();
        let fp = state.fingerprint();
        let outcome = verify(&state, &record).unwrap();
        assert!(!outcome.passed, "{}", outcome.detail);
        assert_eq!(state.fingerprint(), fp, "verify must be a pure read");

        // doubling the limit and rolling the pods drops utilization to 0.45
        exec_line(
            "kubectl set resources deployment/ts-news-service -n train-ticket --limits=cpu=1000m",
            &mut state,
            "train-ticket",
        );
        exec_line(
            "kubectl rollout restart deployment/ts-news-service -n train-ticket",
            &mut state,
            "train-ticket",
        );
        let outcome = verify(&state, &record).unwrap();
        assert!(outcome.passed, "{}", outcome.detail);
        let util = state.observe("ts-news-service").unwrap().pods[0].cpu_fraction;
        assert!((util - 0.45).abs() < 1e-12);
    }

    #[test]
    fn scaling_out_is_not_a_fix_for_cpu_stress() {
        let mut state = load_topology(topology::TT_LIKE).unwrap();
        let record = inject(
            &mut state,
            &FailureSpec::new(FailureType::CpuSaturation, "ts-news-service"),
            0,
        )
        .unwrap();
        exec_line(
            "kubectl scale deployment ts-news-service --namespace=train-ticket --replicas=3",
            &mut state,
            "train-ticket",
        );
        // stress selects the service, so every replica saturates alike
        let m = state.observe("ts-news-service").unwrap();
        assert_eq!(m.pods.len(), 3);
        for p in &m.pods {
            assert!((p.cpu_fraction - 0.9).abs() < 1e-12);
        }
        assert!(!verify(&state, &record).unwrap().passed);
    }

    #[test]
    fn scaling_the_service_away_is_not_a_fix() {
        let mut state = load_topology(topology::SM_LIKE).unwrap();
        let record = inject(
            &mut state,
            &FailureSpec::new(FailureType::CpuSaturation, "gateway"),
            0,
        )
        .unwrap();
        exec_line(
            "kubectl scale deployment gateway --replicas=0 -n simple-micro",
            &mut state,
            "simple-micro",
        );
        // zero pods, zero utilization, ready == desired == 0: still a failure
        let outcome = verify(&state, &record).unwrap();
        assert!(!outcome.passed, "{}", outcome.detail);
    }

    #[test]
    fn not_injected_record_is_contract_violation() {
        let mut state = load_topology(topology::SM_LIKE).unwrap();
        let record = inject(
            &mut state,
            &FailureSpec::new(FailureType::CpuSaturation, "ghost"),
            0,
        )
        .unwrap();
        assert!(matches!(
            verify(&state, &record),
            Err(VerifyError::NotInjected)
        ));
    }

    #[test]
    fn verify_all_is_a_conjunction() {
        let mut state = load_topology(topology::SM_LIKE).unwrap();
        let r1 = inject(
            &mut state,
            &FailureSpec::new(FailureType::NetworkDelay, "gateway"),
            0,
        )
        .unwrap();
        let r2 = inject(
            &mut state,
            &FailureSpec::new(FailureType::NetworkLoss, "user-service"),
            0,
        )
        .unwrap();
        exec_line(
            "kubectl delete networkchaos network-delay-gateway -n simple-micro",
            &mut state,
            "simple-micro",
        );
        let outcomes = verify_all(&state, &[r1, r2]).unwrap();
        assert_eq!(
            outcomes.iter().map(|o| o.passed).collect::<Vec<_>>(),
            vec![true, false]
        );
        assert!(verify_all(&state, &[]).unwrap().is_empty());
    }

    // Fixing one fault must not flip another fault's verdict on a disjoint
    // target from passing to failing.
    #[test]
    fn fixes_are_monotone_on_disjoint_targets() {
        let mut state = load_topology(topology::SM_LIKE).unwrap();
        let r1 = inject(
            &mut state,
            &FailureSpec::new(FailureType::PodFailure, "order-service"),
            0,
        )
        .unwrap();
        let r2 = inject(
            &mut state,
            &FailureSpec::new(FailureType::ConfigError, "storage-service"),
            0,
        )
        .unwrap();
        // fix r2 first
        let corrupted = r2.corrupted_env.clone().unwrap();
        exec_line(
            &format!(
                "kubectl set env deployment/storage-service {}={} -n simple-micro",
                corrupted.key, corrupted.baseline_value
            ),
            &mut state,
            "simple-micro",
        );
        assert!(verify(&state, &r2).unwrap().passed);
        // fixing r1 leaves r2 passing
        exec_line(
            "kubectl delete podchaos pod-failure-order-service -n simple-micro",
            &mut state,
            "simple-micro",
        );
        assert!(verify(&state, &r1).unwrap().passed);
        assert!(verify(&state, &r2).unwrap().passed);
    }
}
