//! Model backends: the plug point where remediation models attach. Scripted
//! backends drive tests and benchmark plumbing deterministically; the remote
//! backend (see `remote.rs`) speaks the chat-completions wire format.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

use crate::chaos::{effect_table, FailureType, RemediationPath};
use crate::cluster::ResourceQuantity;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }
    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }
    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt: u64,
    pub completion: u64,
    pub total: u64,
}

impl TokenUsage {
    pub fn add(&mut self, other: TokenUsage) {
        self.prompt += other.prompt;
        self.completion += other.completion;
        self.total += other.total;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Completion {
    pub content: String,
    pub usage: TokenUsage,
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend timed out after {0}s")]
    Timeout(u64),
    #[error("backend returned HTTP {status}: {body_excerpt}")]
    Http { status: u16, body_excerpt: String },
    #[error("backend protocol error: {0}")]
    Protocol(String),
    #[error("backend transport error: {0}")]
    Transport(String),
}

/// A chat-completion model. Implementations must be shareable across
/// concurrently running episodes: no mutable state between calls.
pub trait ModelBackend: Send + Sync {
    fn complete(
        &self,
        messages: &[ChatMessage],
        timeout_s: u64,
    ) -> Result<Completion, BackendError>;

    /// Scripted backends replay byte-identically; remote ones do not.
    fn deterministic(&self) -> bool {
        true
    }

    fn name(&self) -> &'static str;
}

/// Whitespace-token estimate used when a backend reports no usage:
/// ceil(1.3 x whitespace-separated tokens).
pub fn estimate_tokens(text: &str) -> u64 {
    let words = text.split_whitespace().count() as u64;
    (words * 13).div_ceil(10)
}

pub fn estimated_usage(messages: &[ChatMessage], completion: &str) -> TokenUsage {
    let prompt: u64 = messages.iter().map(|m| estimate_tokens(&m.content)).sum();
    let completion = estimate_tokens(completion);
    TokenUsage {
        prompt,
        completion,
        total: prompt + completion,
    }
}

/// What a scripted backend can recover from the rendered role-definition
/// prompt: the episode facts, exactly as a faithful reader would see them.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportFacts {
    pub namespace: String,
    /// (service, failure type) pairs in report order.
    pub faults: Vec<(String, FailureType)>,
    pub services: Vec<ServiceFacts>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceFacts {
    pub name: String,
    pub replicas: u32,
    pub limits_cpu: ResourceQuantity,
    pub limits_mem: ResourceQuantity,
    pub env: Vec<(String, String)>,
}

impl ReportFacts {
    pub fn service(&self, name: &str) -> Option<&ServiceFacts> {
        self.services.iter().find(|s| s.name == name)
    }
}

pub fn parse_report_facts(system_prompt: &str) -> Result<ReportFacts, BackendError> {
    let proto = |m: String| BackendError::Protocol(m);
    let tail_line = system_prompt
        .lines()
        .find(|l| l.starts_with("The current namespace is: "))
        .ok_or_else(|| proto("prompt carries no namespace line".into()))?;
    let rest = tail_line
        .strip_prefix("The current namespace is: ")
        .unwrap();
    let (namespace, rest) = rest
        .split_once(", failure root cause service is: ")
        .ok_or_else(|| proto("prompt carries no root cause".into()))?;
    let (root_causes, categories) = rest
        .split_once(", and the failure category is: ")
        .ok_or_else(|| proto("prompt carries no failure category".into()))?;
    let categories = categories.trim_end_matches('.');

    let services_list: Vec<&str> = root_causes.split(", ").collect();
    let category_list: Vec<&str> = categories.split(", ").collect();
    if services_list.len() != category_list.len() {
        return Err(proto(format!(
            "{} root causes but {} categories",
            services_list.len(),
            category_list.len()
        )));
    }
    let faults = services_list
        .iter()
        .zip(&category_list)
        .map(|(s, c)| {
            FailureType::from_display_name(c)
                .map(|t| (s.to_string(), t))
                .ok_or_else(|| proto(format!("unknown failure category {c:?}")))
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut services = Vec::new();
    let lines: Vec<&str> = system_prompt.lines().collect();
    for (i, line) in lines.iter().enumerate() {
        if !line.starts_with("deployment=") {
            continue;
        }
        let fields: Vec<(&str, &str)> = line
            .split_whitespace()
            .filter_map(|w| w.split_once('='))
            .collect();
        let get = |key: &str| fields.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);
        let name = get("deployment").unwrap_or_default().to_string();
        let replicas: u32 = get("replicas").and_then(|v| v.parse().ok()).unwrap_or(1);
        let mut limits_cpu = ResourceQuantity::from_millis(0);
        let mut limits_mem = ResourceQuantity::from_millis(0);
        let mut env = Vec::new();
        for detail in lines.iter().skip(i + 1).take(3) {
            let detail = detail.trim();
            if let Some(rest) = detail.strip_prefix("limits: ") {
                for part in rest.split_whitespace() {
                    if let Some(v) = part.strip_prefix("cpu=") {
                        limits_cpu =
                            ResourceQuantity::parse_cpu(v).map_err(|e| proto(e.to_string()))?;
                    }
                    if let Some(v) = part.strip_prefix("memory=") {
                        limits_mem =
                            ResourceQuantity::parse_mem(v).map_err(|e| proto(e.to_string()))?;
                    }
                }
            } else if let Some(rest) = detail.strip_prefix("env: ") {
                env = rest
                    .split_whitespace()
                    .filter_map(|w| w.split_once('='))
                    .map(|(k, v)| (k.to_string(), v.to_string()))
                    .collect();
            }
        }
        services.push(ServiceFacts {
            name,
            replicas,
            limits_cpu,
            limits_mem,
            env,
        });
    }

    Ok(ReportFacts {
        namespace: namespace.to_string(),
        faults,
        services,
    })
}

/// Synthesize the remediation playbook a competent operator would write,
/// taking the first path `effect_table` lists for each fault.
pub fn oracle_playbook(facts: &ReportFacts) -> String {
    let ns = &facts.namespace;
    let mut tasks = String::new();
    for (i, (service, ftype)) in facts.faults.iter().enumerate() {
        let path = effect_table(*ftype).remediable_by[0];
        match path {
            RemediationPath::RaiseCpuLimitAndRestart => {
                let doubled = facts
                    .service(service)
                    .map(|s| ResourceQuantity::from_millis(s.limits_cpu.millis * 2))
                    .unwrap_or(ResourceQuantity::from_millis(1000));
                let new_limit = doubled.format_cpu();
                let _ = write!(
                    tasks,
                    r#"
    - name: Increase CPU limits for {service}
      command: kubectl set resources deployment/{service} -n {ns} --limits=cpu={new_limit} --record
      register: limits_{i}
      ignore_errors: yes
    - name: Roll {service} pods onto the new limits
      command: kubectl rollout restart deployment/{service} -n {ns}
      register: rollout_{i}
      ignore_errors: yes
    - name: Verify CPU limit on {service}
      command: kubectl get deployment {service} -n {ns} -o jsonpath='{{.spec.template.spec.containers[0].resources.limits.cpu}}'
      register: verify_{i}
      failed_when: verify_{i}.stdout != '{new_limit}'
"#
                );
            }
            RemediationPath::RaiseMemLimitAndRestart => {
                let doubled = facts
                    .service(service)
                    .map(|s| ResourceQuantity::from_millis(s.limits_mem.millis * 2))
                    .unwrap_or(ResourceQuantity::from_millis(512));
                let new_limit = doubled.format_mem();
                let _ = write!(
                    tasks,
                    r#"
    - name: Increase memory limits for {service}
      command: kubectl set resources deployment/{service} -n {ns} --limits=memory={new_limit} --record
      register: limits_{i}
      ignore_errors: yes
    - name: Roll {service} pods onto the new limits
      command: kubectl rollout restart deployment/{service} -n {ns}
      register: rollout_{i}
      ignore_errors: yes
    - name: Verify memory limit on {service}
      command: kubectl get deployment {service} -n {ns} -o jsonpath='{{.spec.template.spec.containers[0].resources.limits.memory}}'
      register: verify_{i}
      failed_when: verify_{i}.stdout != '{new_limit}'
"#
                );
            }
            RemediationPath::DeleteChaosObject => {
                let resource = ftype
                    .chaos_kind()
                    .expect("chaos-mode failure types carry a kind")
                    .resource();
                let object = crate::chaos::chaos_object_name(*ftype, service);
                let _ = write!(
                    tasks,
                    r#"
    - name: Remove {object}
      command: kubectl delete {resource} {object} -n {ns}
      register: delete_{i}
      ignore_errors: yes
    - name: Verify {object} is gone
      command: kubectl get {resource} {object} -n {ns}
      register: verify_{i}
      failed_when: verify_{i}.rc == 0
"#
                );
                if *ftype == FailureType::PodFailure {
                    let replicas = facts.service(service).map(|s| s.replicas).unwrap_or(1);
                    let _ = write!(
                        tasks,
                        r#"
    - name: Verify {service} replicas are back
      command: kubectl get deployment {service} -n {ns} -o jsonpath='{{.status.readyReplicas}}'
      register: ready_{i}
      failed_when: ready_{i}.stdout | int < {replicas}
"#
                    );
                }
            }
            RemediationPath::RestoreEnvAndRestart => {
                let corrupted = facts.service(service).and_then(|s| {
                    s.env.iter().enumerate().find_map(|(idx, (k, v))| {
                        v.strip_prefix("INVALID_")
                            .map(|orig| (idx, k.clone(), orig.to_string()))
                    })
                });
                match corrupted {
                    Some((idx, key, original)) => {
                        let _ = write!(
                            tasks,
                            r#"
    - name: Restore {key} on {service}
      command: kubectl set env deployment/{service} {key}={original} -n {ns}
      register: env_{i}
      ignore_errors: yes
    - name: Roll {service} pods onto the restored config
      command: kubectl rollout restart deployment/{service} -n {ns}
      register: rollout_{i}
      ignore_errors: yes
    - name: Verify {key} on {service}
      command: kubectl get deployment {service} -n {ns} -o jsonpath='{{.spec.template.spec.containers[0].env[{idx}].value}}'
      register: verify_{i}
      failed_when: verify_{i}.stdout != '{original}'
"#
                        );
                    }
                    None => {
                        // nothing recognizably corrupted; restart and let
                        // verification speak
                        let _ = write!(
                            tasks,
                            r#"
    - name: Roll {service} pods
      command: kubectl rollout restart deployment/{service} -n {ns}
      register: rollout_{i}
"#
                        );
                    }
                }
            }
        }
    }
    format!("---\n- name: Remediate reported failures\n  hosts: k3s_control_plane\n  tasks:{tasks}")
}

/// The classic first instinct: scale the affected deployments out and call it
/// fixed. Never actually remediates anything in this simulator.
pub fn naive_scale_playbook(facts: &ReportFacts) -> String {
    let ns = &facts.namespace;
    let mut tasks = String::new();
    for (i, (service, _)) in facts.faults.iter().enumerate() {
        let _ = write!(
            tasks,
            r#"
    - name: Scale {service} to increase replicas
      command: kubectl scale deployment {service} --namespace={ns} --replicas=3
      args:
        executable: /bin/bash
      register: scale_result_{i}
      ignore_errors: yes
      changed_when: "'scaled to' in scale_result_{i}.stderr"
    - name: Verify {service} scale
      command: kubectl get deployment {service} -n {ns} -o jsonpath='{{.spec.replicas}}'
      register: verify_result_{i}
      failed_when: verify_result_{i}.stdout | int < 3
"#
        );
    }
    format!(
        "---\n- name: Mitigate load by scaling service replicas\n  hosts: k3s_control_plane\n  tasks:{tasks}"
    )
}

fn fenced(tag: &str, body: &str) -> String {
    format!("```{tag}\n{body}\n```")
}

fn count_probe_results(messages: &[ChatMessage]) -> usize {
    messages
        .iter()
        .filter(|m| m.role == Role::User && m.content.starts_with("Probe "))
        .count()
}

fn count_regenerations(messages: &[ChatMessage]) -> usize {
    messages
        .iter()
        .filter(|m| {
            m.role == Role::User
                && m.content
                    .contains("The previous playbook execution returned")
        })
        .count()
}

fn probing_available(messages: &[ChatMessage]) -> bool {
    messages
        .first()
        .map(|m| m.content.contains("tagged `probe`"))
        .unwrap_or(false)
}

fn scripted_completion(messages: &[ChatMessage], content: String) -> Completion {
    let usage = estimated_usage(messages, &content);
    Completion { content, usage }
}

/// Always answers with the effect-table remediation for every reported fault.
pub struct ScriptedOracle;

impl ModelBackend for ScriptedOracle {
    fn complete(
        &self,
        messages: &[ChatMessage],
        _timeout_s: u64,
    ) -> Result<Completion, BackendError> {
        let facts = parse_report_facts(&messages[0].content)?;
        let content = fenced("yaml", &oracle_playbook(&facts));
        Ok(scripted_completion(messages, content))
    }

    fn name(&self) -> &'static str {
        "oracle"
    }
}

/// First answers with the naive scale-out playbook (after two probe rounds
/// when probing is available); switches to the oracle remediation once a
/// regeneration prompt appears. State lives entirely in the conversation.
pub struct ScriptedNaiveThenOracle;

impl ModelBackend for ScriptedNaiveThenOracle {
    fn complete(
        &self,
        messages: &[ChatMessage],
        _timeout_s: u64,
    ) -> Result<Completion, BackendError> {
        let facts = parse_report_facts(&messages[0].content)?;
        if count_regenerations(messages) > 0 {
            let content = fenced("yaml", &oracle_playbook(&facts));
            return Ok(scripted_completion(messages, content));
        }
        if probing_available(messages) {
            let (service, _) = &facts.faults[0];
            let ns = &facts.namespace;
            match count_probe_results(messages) {
                0 => {
                    let line = format!(
                        "kubectl get deployment {service} -n {ns} -o jsonpath='{{.spec.replicas}}'; \
                         kubectl get deployment {service} -n {ns} -o jsonpath='{{.spec.template.spec.containers[0].resources.limits.cpu}}'; \
                         kubectl describe hpa {service} -n {ns} 2>/dev/null || echo 'No HPA found'"
                    );
                    return Ok(scripted_completion(messages, fenced("probe", &line)));
                }
                1 => {
                    let line = format!(
                        "kubectl get deployment {service} -n {ns} -o jsonpath='{{.spec.template.spec.containers[0].resources.requests.cpu}}'"
                    );
                    return Ok(scripted_completion(messages, fenced("probe", &line)));
                }
                _ => {}
            }
        }
        let content = fenced("yaml", &naive_scale_playbook(&facts));
        Ok(scripted_completion(messages, content))
    }

    fn name(&self) -> &'static str {
        "naive_then_oracle"
    }
}

/// Emits prose with no fenced playbook; exercises the unparseable path.
pub struct ScriptedBroken;

impl ModelBackend for ScriptedBroken {
    fn complete(
        &self,
        messages: &[ChatMessage],
        _timeout_s: u64,
    ) -> Result<Completion, BackendError> {
        let content = "I believe the issue is resource pressure on the affected service. \
                       Consider scaling it out or raising its limits."
            .to_string();
        Ok(scripted_completion(messages, content))
    }

    fn name(&self) -> &'static str {
        "broken"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn token_estimate_is_ceil_of_1_3x() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("one"), 2); // ceil(1.3)
        assert_eq!(estimate_tokens("a b c d e f g h i j"), 13);
    }

    #[test]
    fn facts_round_trip_through_the_prompt() {
        let prompt = "\
You are an experienced SRE managing a microservice system.
Runtime environment:
deployment=ts-news-service namespace=train-ticket replicas=1 image=registry.local/ts-news-service:1.0
  requests: cpu=100m memory=64Mi
  limits: cpu=500m memory=128Mi
  env: NEWS_DB_HOST=INVALID_ts-news-db
The content of inventory.ini is [k3s_control_plane]
The current namespace is: train-ticket, failure root cause service is: ts-news-service, and the failure category is: CPU Saturation.";
        let facts = parse_report_facts(prompt).unwrap();
        assert_eq!(facts.namespace, "train-ticket");
        assert_eq!(
            facts.faults,
            vec![("ts-news-service".to_string(), FailureType::CpuSaturation)]
        );
        let svc = facts.service("ts-news-service").unwrap();
        assert_eq!(svc.limits_cpu.millis, 500);
        assert_eq!(svc.env[0].1, "INVALID_ts-news-db");
    }

    #[test]
    fn oracle_playbook_parses_under_the_dialect() {
        let facts = ReportFacts {
            namespace: "simple-micro".into(),
            faults: vec![
                ("gateway".into(), FailureType::CpuSaturation),
                ("user-service".into(), FailureType::PodFailure),
                ("order-service".into(), FailureType::ConfigError),
            ],
            services: vec![
                ServiceFacts {
                    name: "gateway".into(),
                    replicas: 2,
                    limits_cpu: ResourceQuantity::from_millis(400),
                    limits_mem: ResourceQuantity::from_millis(192),
                    env: vec![("RATE_LIMIT".into(), "100".into())],
                },
                ServiceFacts {
                    name: "user-service".into(),
                    replicas: 1,
                    limits_cpu: ResourceQuantity::from_millis(300),
                    limits_mem: ResourceQuantity::from_millis(128),
                    env: vec![],
                },
                ServiceFacts {
                    name: "order-service".into(),
                    replicas: 1,
                    limits_cpu: ResourceQuantity::from_millis(300),
                    limits_mem: ResourceQuantity::from_millis(128),
                    env: vec![("ORDER_TOPIC".into(), "INVALID_orders".into())],
                },
            ],
        };
        let text = oracle_playbook(&facts);
        let pb = crate::playbook::parse_playbook(&text).expect(&text);
        assert_eq!(pb.plays.len(), 1);
        assert!(text.contains("--limits=cpu=800m"));
        assert!(text.contains("kubectl delete podchaos pod-failure-user-service"));
        assert!(text.contains("ORDER_TOPIC=orders"));

        let naive = naive_scale_playbook(&facts);
        crate::playbook::parse_playbook(&naive).expect(&naive);
    }
}
