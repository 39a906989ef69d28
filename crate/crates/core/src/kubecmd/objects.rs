//! Canonical JSON renderings of cluster objects. These are the substrate
//! jsonpath probes evaluate against, so their shape is stable and golden-tested.

use serde_json::{json, Value};

use crate::cluster::{ChaosObject, ClusterState, Deployment, PodInstance, PodPhase};

pub fn deployment_json(state: &ClusterState, dep: &Deployment) -> Value {
    let pods: Vec<&PodInstance> = state.pods_of(&dep.name).collect();
    let ready = pods.iter().filter(|p| p.ready).count();
    let updated = pods
        .iter()
        .filter(|p| p.generation == dep.generation)
        .count();
    let env: Vec<Value> = dep
        .template
        .env
        .iter()
        .map(|(k, v)| json!({"name": k, "value": v}))
        .collect();
    json!({
        "apiVersion": "apps/v1",
        "kind": "Deployment",
        "metadata": {
            "annotations": dep.annotations,
            "generation": dep.generation,
            "name": dep.name,
            "namespace": dep.namespace,
        },
        "spec": {
            "replicas": dep.desired_replicas,
            "template": {
                "spec": {
                    "containers": [{
                        "env": env,
                        "image": dep.template.image,
                        "name": dep.name,
                        "resources": {
                            "limits": {
                                "cpu": dep.template.limits_cpu.format_cpu(),
                                "memory": dep.template.limits_mem.format_mem(),
                            },
                            "requests": {
                                "cpu": dep.template.requests_cpu.format_cpu(),
                                "memory": dep.template.requests_mem.format_mem(),
                            },
                        },
                    }],
                },
            },
        },
        "status": {
            "readyReplicas": ready,
            "replicas": pods.len(),
            "updatedReplicas": updated,
        },
    })
}

pub fn pod_json(state: &ClusterState, pod: &PodInstance) -> Value {
    json!({
        "apiVersion": "v1",
        "kind": "Pod",
        "metadata": {
            "name": pod.uid,
            "namespace": state.namespace,
            "uid": pod.uid,
        },
        "status": {
            "phase": phase_str(pod.phase),
            "ready": pod.ready,
            "restartCount": pod.restart_count,
        },
    })
}

pub fn list_json(items: Vec<Value>) -> Value {
    json!({
        "apiVersion": "v1",
        "items": items,
        "kind": "List",
    })
}

pub fn chaos_json(obj: &ChaosObject) -> Value {
    json!({
        "apiVersion": "chaos-mesh.org/v1alpha1",
        "kind": obj.kind.as_str(),
        "metadata": {
            "name": obj.name,
            "namespace": obj.namespace,
        },
        "spec": {
            "params": obj.params,
            "selector": {"service": obj.selector_service},
        },
    })
}

pub fn phase_str(phase: PodPhase) -> &'static str {
    match phase {
        PodPhase::Running => "Running",
        PodPhase::Pending => "Pending",
        PodPhase::Failed => "Failed",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{load_topology, topology};

    // The rendering is a probe substrate: pin it.
    #[test]
    fn deployment_rendering_golden() {
        let state = load_topology(topology::TT_LIKE).unwrap();
        let dep = &state.deployments["ts-news-service"];
        let rendered = serde_json::to_string(&deployment_json(&state, dep)).unwrap();
        let expected = concat!(
            r#"{"apiVersion":"apps/v1","kind":"Deployment","metadata":{"annotations":{},"generation":1,"name":"ts-news-service","namespace":"train-ticket"},"#,
            r#""spec":{"replicas":1,"template":{"spec":{"containers":[{"env":[{"name":"NEWS_DB_HOST","value":"ts-news-db"}],"image":"registry.local/ts-news-service:1.0","name":"ts-news-service","#,
            r#""resources":{"limits":{"cpu":"500m","memory":"128Mi"},"requests":{"cpu":"100m","memory":"64Mi"}}}]}}},"#,
            r#""status":{"readyReplicas":1,"replicas":1,"updatedReplicas":1}}"#
        );
        assert_eq!(rendered, expected);
    }

    #[test]
    fn pod_rendering_shape() {
        let state = load_topology(topology::SM_LIKE).unwrap();
        let pod = state.pods_of("gateway").next().unwrap();
        let v = pod_json(&state, pod);
        assert_eq!(v["status"]["phase"], "Running");
        assert_eq!(v["metadata"]["name"], v["metadata"]["uid"]);
    }
}
