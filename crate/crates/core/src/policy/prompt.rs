//! Prompt templates the policies feed their model backends. The role
//! definition seeds every episode; the regeneration prompt drives reflection
//! after a failed attempt.

use crate::chaos::InjectionRecord;
use crate::cluster::ClusterState;
use crate::playbook::Inventory;
use serde::{Deserialize, Serialize};

pub const ROLE_DEFINITION_TEMPLATE: &str = "\
You are an experienced SRE managing a microservice system.
A failure has occurred, and your task is to generate a final executable Ansible playbook based on the given root cause, failure category, and the probed information (executed by \"ansible-playbook -i inventory.ini remediation.yml\").
The system will automatically execute the playbook and verify whether the failure has been successfully resolved.
[Attention] Please ensure that online services remain uninterrupted; restarting services should not be considered a primary strategy.
{runtime_envs}
The content of inventory.ini is {inventory_content}
The current namespace is: {namespace}, failure root cause service is: {root_cause}, and the failure category is: {failure_category}.";

pub const REGENERATION_TEMPLATE: &str = "\
The failure of online service has not yet been remediated.
You may use the probe agent to further inspect the system state and generate a new Ansible playbook to attempt remediation again.
The previous playbook execution returned: {playbook_exec_status}, output: {status}";

/// Output-format instructions for the one-shot policy.
pub const FINAL_ONLY_PROTOCOL: &str = "\
Reply with the final Ansible playbook in a single fenced code block tagged `yaml`.";

/// Tool protocol for the iterative policy: read-only probes first, playbook
/// when ready. The probe marker below is what scripted backends key on to
/// know probing is available.
pub const PROBE_PROTOCOL: &str = "\
You may inspect the system before answering. To run a read-only probe, reply with exactly one fenced code block tagged `probe` containing a single shell line; kubectl get/describe/top, chaos get and echo are allowed, composed with ';', '&&' or '||':
```probe
kubectl get deployment my-service -n my-namespace -o jsonpath='{.spec.replicas}'
```
Each probe result arrives as the next user message. When you are ready to remediate, reply with the final Ansible playbook in a single fenced code block tagged `yaml`.";

/// Structured diagnosis handed to a policy: everything the role-definition
/// template needs to render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FailureReport {
    pub namespace: String,
    /// Root-cause service name; comma-joined when several faults are active.
    pub root_cause: String,
    /// Failure-category display name, comma-joined alongside `root_cause`.
    pub failure_category: String,
    pub runtime_envs: String,
    pub inventory_content: String,
}

impl FailureReport {
    /// Build the report from injection ground truth: one (root cause,
    /// category) pair per record plus a runtime block per affected service.
    pub fn from_records(
        state: &ClusterState,
        records: &[InjectionRecord],
        inventory: &Inventory,
    ) -> Self {
        let root_cause = records
            .iter()
            .map(|r| r.spec.target_service.clone())
            .collect::<Vec<_>>()
            .join(", ");
        let failure_category = records
            .iter()
            .map(|r| r.spec.failure_type.display_name().to_string())
            .collect::<Vec<_>>()
            .join(", ");

        let mut seen = Vec::new();
        let mut blocks = vec!["Runtime environment:".to_string()];
        for record in records {
            let service = &record.spec.target_service;
            if seen.contains(service) {
                continue;
            }
            seen.push(service.clone());
            if let Some(dep) = state.deployments.get(service) {
                let env_line = dep
                    .template
                    .env
                    .iter()
                    .map(|(k, v)| format!("{k}={v}"))
                    .collect::<Vec<_>>()
                    .join(" ");
                blocks.push(format!(
                    "deployment={} namespace={} replicas={} image={}\n  requests: cpu={} memory={}\n  limits: cpu={} memory={}\n  env: {}",
                    dep.name,
                    dep.namespace,
                    dep.desired_replicas,
                    dep.template.image,
                    dep.template.requests_cpu.format_cpu(),
                    dep.template.requests_mem.format_mem(),
                    dep.template.limits_cpu.format_cpu(),
                    dep.template.limits_mem.format_mem(),
                    env_line,
                ));
            }
        }

        FailureReport {
            namespace: state.namespace.clone(),
            root_cause,
            failure_category,
            runtime_envs: blocks.join("\n"),
            inventory_content: inventory.content.clone(),
        }
    }

    /// Fill the role-definition template placeholders.
    pub fn render_role_definition(&self) -> String {
        ROLE_DEFINITION_TEMPLATE
            .replace("{runtime_envs}", &self.runtime_envs)
            .replace("{inventory_content}", &self.inventory_content)
            .replace("{namespace}", &self.namespace)
            .replace("{root_cause}", &self.root_cause)
            .replace("{failure_category}", &self.failure_category)
    }
}

pub fn render_regeneration(playbook_exec_status: &str, status: &str) -> String {
    REGENERATION_TEMPLATE
        .replace("{playbook_exec_status}", playbook_exec_status)
        .replace("{status}", status)
}
