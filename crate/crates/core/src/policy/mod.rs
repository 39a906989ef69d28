//! Remediation policies: one-shot generation, and the iterative
//! coordinator/probe/execution/verification loop with reflection bounded by a
//! retry budget. Backends plug in through [`ModelBackend`].

pub mod backend;
pub mod prompt;
pub mod remote;

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use crate::chaos::InjectionRecord;
use crate::cluster::ClusterState;
use crate::kubecmd::{self, CmdResult};
use crate::playbook::{self, parse_playbook, run_playbook, Inventory, Transcript};
use crate::verify::{verify_all, VerifyOutcome};

pub use backend::{
    estimate_tokens, estimated_usage, BackendError, ChatMessage, Completion, ModelBackend, Role,
    ScriptedBroken, ScriptedNaiveThenOracle, ScriptedOracle, TokenUsage,
};
pub use prompt::{render_regeneration, FailureReport, PROBE_PROTOCOL, ROLE_DEFINITION_TEMPLATE};
pub use remote::{RemoteChat, API_KEY_ENV, DEFAULT_TIMEOUT_S};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PolicyKind {
    SoloGen,
    ThinkRemed,
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PolicyKind::SoloGen => write!(f, "sologen"),
            PolicyKind::ThinkRemed => write!(f, "thinkremed"),
        }
    }
}

impl FromStr for PolicyKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sologen" => Ok(PolicyKind::SoloGen),
            "thinkremed" => Ok(PolicyKind::ThinkRemed),
            other => Err(format!("unknown policy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyConfig {
    /// Maximum reflection retries; total attempts are bounded by `t_max + 1`.
    pub t_max: u32,
    /// Read-only probe rounds allowed per attempt.
    pub probe_budget: u32,
    pub timeout_s: u64,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            t_max: 1,
            probe_budget: 5,
            timeout_s: DEFAULT_TIMEOUT_S,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ChatTranscript {
    pub messages: Vec<ChatMessage>,
    pub probe_rounds: u32,
    pub token_usage: TokenUsage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyOutcome {
    /// One entry per attempt: the playbook text the model produced (raw
    /// assistant content when nothing parseable was found).
    pub final_playbooks: Vec<String>,
    pub transcripts: Vec<Transcript>,
    pub verify_outcomes: Vec<VerifyOutcome>,
    pub attempts_used: u32,
    pub success: bool,
    pub wall_latency_s: f64,
    pub attempt_latencies_s: Vec<f64>,
    pub tokens: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub failure_detail: Option<String>,
    pub chat: ChatTranscript,
}

/// Classification of one assistant reply under the tool protocol.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelOutput {
    Probe(String),
    Final(String),
    Unparseable,
}

/// Scan fenced blocks in order; the first block tagged `probe` or `yaml` (or
/// an untagged block that parses as a playbook) wins.
pub fn parse_model_output(content: &str) -> ModelOutput {
    let mut lines = content.lines().peekable();
    while let Some(line) = lines.next() {
        let trimmed = line.trim_start();
        let Some(tag) = trimmed.strip_prefix("```") else {
            continue;
        };
        let tag = tag.trim().to_string();
        let mut body = String::new();
        for body_line in lines.by_ref() {
            if body_line.trim_start().starts_with("```") {
                break;
            }
            body.push_str(body_line);
            body.push('\n');
        }
        match tag.as_str() {
            "probe" => return ModelOutput::Probe(body.trim().to_string()),
            "yaml" | "yml" => return ModelOutput::Final(body),
            "" if parse_playbook(&body).is_ok() => return ModelOutput::Final(body),
            _ => continue,
        }
    }
    ModelOutput::Unparseable
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProbeDecision {
    Executed(CmdResult),
    Rejected(String),
}

/// Probe whitelist: kubectl get/describe/top, chaos get, and echo. Everything
/// else is rejected before touching the cluster, so an accepted probe can
/// never mutate state.
pub fn run_probe(line: &str, state: &mut ClusterState) -> ProbeDecision {
    let namespace = state.namespace.clone();
    let cmds = match playbook::shell::parse_line(line) {
        Ok(c) => c,
        Err(e) => return ProbeDecision::Rejected(format!("probe rejected: {e}")),
    };
    for cmd in &cmds {
        match cmd.argv[0].as_str() {
            "echo" => {}
            "kubectl" => {
                let rendered = cmd
                    .argv
                    .iter()
                    .map(|a| {
                        if a.chars().any(char::is_whitespace) || a.is_empty() {
                            format!("'{a}'")
                        } else {
                            a.clone()
                        }
                    })
                    .collect::<Vec<_>>()
                    .join(" ");
                match kubecmd::parse_command(&rendered, &namespace) {
                    Ok(parsed) if parsed.verb.is_mutating() => {
                        return ProbeDecision::Rejected(format!(
                            "probe must be read-only: {:?} mutates the cluster",
                            parsed.verb
                        ))
                    }
                    Ok(_) => {}
                    Err(kubecmd::CmdError::Unsupported(what)) => {
                        return ProbeDecision::Rejected(format!(
                            "probe rejected: unsupported command: {what}"
                        ))
                    }
                    Err(e) => return ProbeDecision::Rejected(format!("probe rejected: {e}")),
                }
            }
            other => {
                return ProbeDecision::Rejected(format!(
                    "probe rejected: unsupported command: {other}"
                ))
            }
        }
    }
    ProbeDecision::Executed(playbook::shell::run_parsed(&cmds, state, &namespace))
}

fn probe_feedback(decision: &ProbeDecision) -> String {
    match decision {
        ProbeDecision::Executed(result) => {
            // execution joins command outputs with newlines; the chat layer
            // renders them "; "-joined, the way an operator would report them
            let mut msg = format!(
                "Probe result (rc={}): {}",
                result.rc,
                result.stdout.replace('\n', "; ")
            );
            if !result.stderr.is_empty() {
                msg.push_str("\nstderr: ");
                msg.push_str(&result.stderr.replace('\n', "; "));
            }
            msg
        }
        ProbeDecision::Rejected(reason) => format!("Probe rejected: {reason}"),
    }
}

enum AttemptEnd {
    Success,
    Failed { exec_status: String, status: String },
}

struct Loop<'a> {
    backend: &'a dyn ModelBackend,
    cfg: &'a PolicyConfig,
    records: &'a [InjectionRecord],
    inventory: Inventory,
    chat: ChatTranscript,
    outcome: PolicyOutcome,
}

impl<'a> Loop<'a> {
    fn new(
        report: &FailureReport,
        records: &'a [InjectionRecord],
        backend: &'a dyn ModelBackend,
        cfg: &'a PolicyConfig,
        system_prompt: String,
    ) -> Self {
        Loop {
            backend,
            cfg,
            records,
            inventory: Inventory::parse(&report.inventory_content),
            chat: ChatTranscript {
                messages: vec![ChatMessage::system(system_prompt)],
                probe_rounds: 0,
                token_usage: TokenUsage::default(),
            },
            outcome: PolicyOutcome {
                final_playbooks: Vec::new(),
                transcripts: Vec::new(),
                verify_outcomes: Vec::new(),
                attempts_used: 0,
                success: false,
                wall_latency_s: 0.0,
                attempt_latencies_s: Vec::new(),
                tokens: 0,
                failure_detail: None,
                chat: ChatTranscript::default(),
            },
        }
    }

    fn complete(&mut self) -> Result<String, BackendError> {
        let completion = self
            .backend
            .complete(&self.chat.messages, self.cfg.timeout_s)?;
        self.chat.token_usage.add(completion.usage);
        self.chat
            .messages
            .push(ChatMessage::assistant(completion.content.clone()));
        Ok(completion.content)
    }

    /// Execute a produced playbook and verify. Returns how the attempt ended.
    fn execute_final(&mut self, text: String, state: &mut ClusterState) -> AttemptEnd {
        self.outcome.final_playbooks.push(text.clone());
        let pb = match parse_playbook(&text) {
            Ok(pb) => pb,
            Err(e) => {
                return AttemptEnd::Failed {
                    exec_status: "not_executed".into(),
                    status: format!("playbook parse error: {e}"),
                }
            }
        };
        let transcript = match run_playbook(&pb, state, &self.inventory) {
            Ok(t) => t,
            Err(e) => {
                return AttemptEnd::Failed {
                    exec_status: "not_executed".into(),
                    status: format!("playbook rejected: {e}"),
                }
            }
        };
        let exec_status = transcript.status_word().to_string();
        let exec_summary = transcript.summary.clone();
        self.outcome.transcripts.push(transcript);

        let outcomes = match verify_all(state, self.records) {
            Ok(o) => o,
            Err(e) => {
                return AttemptEnd::Failed {
                    exec_status,
                    status: format!("verification error: {e}"),
                }
            }
        };
        let passed = !outcomes.is_empty() && outcomes.iter().all(|o| o.passed);
        let failing = outcomes
            .iter()
            .filter(|o| !o.passed)
            .map(|o| o.detail.clone())
            .collect::<Vec<_>>()
            .join("; ");
        self.outcome.verify_outcomes.extend(outcomes);
        if passed {
            AttemptEnd::Success
        } else {
            AttemptEnd::Failed {
                exec_status,
                status: format!("{exec_summary}; verification: {failing}"),
            }
        }
    }

    fn finish(mut self, started: Instant) -> PolicyOutcome {
        self.outcome.wall_latency_s = started.elapsed().as_secs_f64();
        self.outcome.tokens = self.chat.token_usage.total;
        self.outcome.chat = self.chat;
        self.outcome
    }
}

/// One-shot generation: a single prompt, a single completion parsed as the
/// final playbook, executed and verified. No probes, no reflection.
pub fn sologen(
    report: &FailureReport,
    records: &[InjectionRecord],
    backend: &dyn ModelBackend,
    state: &mut ClusterState,
    cfg: &PolicyConfig,
) -> PolicyOutcome {
    let started = Instant::now();
    let system = format!(
        "{}\n{}",
        report.render_role_definition(),
        prompt::FINAL_ONLY_PROTOCOL
    );
    let mut ctx = Loop::new(report, records, backend, cfg, system);

    let attempt_started = Instant::now();
    let end = match ctx.complete() {
        Ok(content) => match parse_model_output(&content) {
            ModelOutput::Final(text) => ctx.execute_final(text, state),
            ModelOutput::Probe(_) | ModelOutput::Unparseable => {
                ctx.outcome.final_playbooks.push(content);
                AttemptEnd::Failed {
                    exec_status: "not_executed".into(),
                    status: "parse_error".into(),
                }
            }
        },
        Err(e) => AttemptEnd::Failed {
            exec_status: "not_executed".into(),
            status: backend_failure_detail(&e),
        },
    };
    ctx.outcome.attempts_used = 1;
    ctx.outcome
        .attempt_latencies_s
        .push(attempt_started.elapsed().as_secs_f64());
    match end {
        AttemptEnd::Success => ctx.outcome.success = true,
        AttemptEnd::Failed { status, .. } => ctx.outcome.failure_detail = Some(status),
    }
    ctx.finish(started)
}

/// Iterative reasoning-action-reflection: probe rounds while budget remains,
/// then execute the produced playbook; on failed verification append the
/// regeneration prompt and try again, bounded by `t_max` retries.
pub fn thinkremed(
    report: &FailureReport,
    records: &[InjectionRecord],
    backend: &dyn ModelBackend,
    state: &mut ClusterState,
    cfg: &PolicyConfig,
) -> PolicyOutcome {
    let started = Instant::now();
    let system = format!(
        "{}\n\n{}",
        report.render_role_definition(),
        prompt::PROBE_PROTOCOL
    );
    let mut ctx = Loop::new(report, records, backend, cfg, system);

    'attempts: loop {
        let attempt_started = Instant::now();
        let mut probes_this_attempt = 0u32;
        let end = loop {
            let content = match ctx.complete() {
                Ok(c) => c,
                Err(e) => {
                    break AttemptEnd::Failed {
                        exec_status: "not_executed".into(),
                        status: backend_failure_detail(&e),
                    }
                }
            };
            match parse_model_output(&content) {
                ModelOutput::Probe(line) => {
                    if probes_this_attempt >= cfg.probe_budget {
                        break AttemptEnd::Failed {
                            exec_status: "not_executed".into(),
                            status: format!(
                                "probe budget exhausted ({} per attempt)",
                                cfg.probe_budget
                            ),
                        };
                    }
                    probes_this_attempt += 1;
                    ctx.chat.probe_rounds += 1;
                    let decision = run_probe(&line, state);
                    let feedback = probe_feedback(&decision);
                    ctx.chat.messages.push(ChatMessage::user(feedback));
                }
                ModelOutput::Final(text) => break ctx.execute_final(text, state),
                ModelOutput::Unparseable => {
                    ctx.outcome.final_playbooks.push(content);
                    break AttemptEnd::Failed {
                        exec_status: "not_executed".into(),
                        status: "no playbook detected in reply".into(),
                    };
                }
            }
        };

        ctx.outcome.attempts_used += 1;
        ctx.outcome
            .attempt_latencies_s
            .push(attempt_started.elapsed().as_secs_f64());
        match end {
            AttemptEnd::Success => {
                ctx.outcome.success = true;
                break 'attempts;
            }
            AttemptEnd::Failed {
                exec_status,
                status,
            } => {
                ctx.outcome.failure_detail = Some(status.clone());
                if ctx.outcome.attempts_used <= cfg.t_max {
                    let regen = render_regeneration(&exec_status, &status);
                    ctx.chat.messages.push(ChatMessage::user(regen));
                } else {
                    break 'attempts;
                }
            }
        }
    }
    ctx.finish(started)
}

/// Dispatch helper the benchmark runner uses.
pub fn run_policy(
    kind: PolicyKind,
    report: &FailureReport,
    records: &[InjectionRecord],
    backend: &dyn ModelBackend,
    state: &mut ClusterState,
    cfg: &PolicyConfig,
) -> PolicyOutcome {
    match kind {
        PolicyKind::SoloGen => sologen(report, records, backend, state, cfg),
        PolicyKind::ThinkRemed => thinkremed(report, records, backend, state, cfg),
    }
}

fn backend_failure_detail(e: &BackendError) -> String {
    match e {
        BackendError::Timeout(_) => "timeout".to_string(),
        other => format!("backend error: {other}"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::{inject, FailureSpec, FailureType};
    use crate::cluster::{load_topology, topology};

    fn injected_tt() -> (ClusterState, Vec<InjectionRecord>, FailureReport) {
        let mut state = load_topology(topology::TT_LIKE).unwrap();
        let record = inject(
            &mut state,
            &FailureSpec::new(FailureType::CpuSaturation, "ts-news-service"),
            0,
        )
        .unwrap();
        let records = vec![record];
        let report = FailureReport::from_records(&state, &records, &Inventory::default());
        (state, records, report)
    }

    #[test]
    fn defaults_are_pinned() {
        let cfg = PolicyConfig::default();
        assert_eq!(cfg.t_max, 1);
        assert_eq!(cfg.probe_budget, 5);
        assert_eq!(cfg.timeout_s, 300);
    }

    #[test]
    fn parse_model_output_cases() {
        assert_eq!(
            parse_model_output("```probe\nkubectl get pods -n x\n```"),
            ModelOutput::Probe("kubectl get pods -n x".into())
        );
        assert!(matches!(
            parse_model_output(
                "```yaml\n---\n- name: fix\n  hosts: k3s_control_plane\n  tasks: []\n```"
            ),
            ModelOutput::Final(_)
        ));
        assert_eq!(
            parse_model_output("I think the issue is CPU."),
            ModelOutput::Unparseable
        );
        // untagged fence that parses as a playbook is accepted as final
        assert!(matches!(
            parse_model_output("```\n- hosts: all\n  tasks: []\n```"),
            ModelOutput::Final(_)
        ));
        // first matching block wins
        assert!(matches!(
            parse_model_output("```json\n{}\n```\n```probe\necho hi\n```"),
            ModelOutput::Probe(_)
        ));
    }

    #[test]
    fn sologen_oracle_fixes_cpu_in_one_attempt() {
        let (mut state, records, report) = injected_tt();
        let outcome = sologen(
            &report,
            &records,
            &ScriptedOracle,
            &mut state,
            &PolicyConfig::default(),
        );
        assert!(outcome.success, "{:?}", outcome.failure_detail);
        assert_eq!(outcome.attempts_used, 1);
        assert!(outcome.tokens > 0);
    }

    #[test]
    fn sologen_broken_is_parse_error() {
        let (mut state, records, report) = injected_tt();
        let outcome = sologen(
            &report,
            &records,
            &ScriptedBroken,
            &mut state,
            &PolicyConfig::default(),
        );
        assert!(!outcome.success);
        assert_eq!(outcome.failure_detail.as_deref(), Some("parse_error"));
    }

    #[test]
    fn thinkremed_naive_then_oracle_needs_one_reflection() {
        let (mut state, records, report) = injected_tt();
        let cfg = PolicyConfig {
            t_max: 1,
            ..PolicyConfig::default()
        };
        let outcome = thinkremed(
            &report,
            &records,
            &ScriptedNaiveThenOracle,
            &mut state,
            &cfg,
        );
        assert!(outcome.success, "{:?}", outcome.failure_detail);
        assert_eq!(outcome.attempts_used, 2);
        assert_eq!(outcome.chat.probe_rounds, 2);

        // the first probe round reports replicas, cpu limit and missing HPA
        let probe_reply = outcome
            .chat
            .messages
            .iter()
            .find(|m| m.role == Role::User && m.content.starts_with("Probe result"))
            .expect("probe feedback present");
        for needle in ["1", "500m", "No HPA found"] {
            assert!(
                probe_reply.content.contains(needle),
                "{}",
                probe_reply.content
            );
        }
    }

    #[test]
    fn thinkremed_exhausts_budget_at_t_max_zero() {
        let (mut state, records, report) = injected_tt();
        let cfg = PolicyConfig {
            t_max: 0,
            ..PolicyConfig::default()
        };
        let outcome = thinkremed(
            &report,
            &records,
            &ScriptedNaiveThenOracle,
            &mut state,
            &cfg,
        );
        assert!(!outcome.success);
        assert_eq!(outcome.attempts_used, 1);
    }

    #[test]
    fn probe_whitelist_rejects_mutating_and_unknown() {
        let mut state = load_topology(topology::SM_LIKE).unwrap();
        let fp = state.fingerprint();
        let d = run_probe(
            "kubectl scale deployment gateway --replicas=0 -n simple-micro",
            &mut state,
        );
        assert!(
            matches!(&d, ProbeDecision::Rejected(r) if r.contains("read-only")),
            "{d:?}"
        );
        let d = run_probe("rm -rf /", &mut state);
        assert!(matches!(&d, ProbeDecision::Rejected(_)));
        let d = run_probe(
            "kubectl get pods -n simple-micro && kubectl delete pod x -n simple-micro",
            &mut state,
        );
        assert!(matches!(&d, ProbeDecision::Rejected(_)));
        assert_eq!(state.fingerprint(), fp);
    }

    // A backend that tries to mutate through the probe channel: the round is
    // consumed, the rejection is user-visible, and the loop still finishes.
    struct MutatingProbeThenOracle;

    impl ModelBackend for MutatingProbeThenOracle {
        fn complete(
            &self,
            messages: &[ChatMessage],
            _timeout_s: u64,
        ) -> Result<backend::Completion, BackendError> {
            let probed = messages
                .iter()
                .any(|m| m.role == Role::User && m.content.starts_with("Probe "));
            let content = if !probed {
                "```probe\nkubectl delete pod gateway-1-0 -n train-ticket\n```".to_string()
            } else {
                let facts = backend::parse_report_facts(&messages[0].content)?;
                format!("```yaml\n{}\n```", backend::oracle_playbook(&facts))
            };
            Ok(backend::Completion {
                usage: backend::estimated_usage(messages, &content),
                content,
            })
        }

        fn name(&self) -> &'static str {
            "mutating_probe_then_oracle"
        }
    }

    #[test]
    fn mutating_probe_consumes_a_round_and_is_rejected_visibly() {
        let (mut state, records, report) = injected_tt();
        let fp = state.fingerprint();
        let outcome = thinkremed(
            &report,
            &records,
            &MutatingProbeThenOracle,
            &mut state,
            &PolicyConfig::default(),
        );
        assert!(outcome.success, "{:?}", outcome.failure_detail);
        assert_eq!(outcome.chat.probe_rounds, 1);
        let rejection = outcome
            .chat
            .messages
            .iter()
            .find(|m| m.role == Role::User && m.content.starts_with("Probe rejected"))
            .expect("rejection feedback present");
        assert!(
            rejection.content.contains("read-only"),
            "{}",
            rejection.content
        );
        // alternation after the system message holds throughout
        for pair in outcome.chat.messages[1..].windows(2) {
            assert_ne!(pair[0].role, pair[1].role, "roles must alternate");
        }
        let _ = fp;
    }

    #[test]
    fn oracle_tokens_grow_with_the_thinkremed_protocol() {
        let (mut state_a, records, report) = injected_tt();
        let solo = sologen(
            &report,
            &records,
            &ScriptedOracle,
            &mut state_a,
            &PolicyConfig::default(),
        );
        let (mut state_b, records_b, report_b) = injected_tt();
        let think = thinkremed(
            &report_b,
            &records_b,
            &ScriptedOracle,
            &mut state_b,
            &PolicyConfig::default(),
        );
        assert!(solo.success && think.success);
        assert!(
            think.tokens >= solo.tokens,
            "thinkremed {} < sologen {}",
            think.tokens,
            solo.tokens
        );
    }
}
