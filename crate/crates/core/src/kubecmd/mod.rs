//! Parser and executor for the kubectl-dialect command language playbooks and
//! probes use against the simulated cluster.
//!
//! The grammar is documented in `docs/command-grammar.md`. Verbs outside it
//! fail with rc 127 and an "unsupported in simulator" message so agents get
//! actionable feedback instead of silent no-ops.

pub mod jsonpath;
pub mod objects;

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use thiserror::Error;

use crate::cluster::{ChaosKind, ClusterState, ResourceQuantity};
pub use jsonpath::{jsonpath_eval, JsonPathError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verb {
    Get,
    Describe,
    Top,
    Scale,
    SetResources,
    SetEnv,
    RolloutRestart,
    DeletePod,
    DeleteChaos,
    GetChaos,
}

impl Verb {
    pub fn is_mutating(self) -> bool {
        matches!(
            self,
            Verb::Scale
                | Verb::SetResources
                | Verb::SetEnv
                | Verb::RolloutRestart
                | Verb::DeletePod
                | Verb::DeleteChaos
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObjectKind {
    Deployment,
    Pod,
    Hpa,
    StressChaos,
    NetworkChaos,
    PodChaos,
    /// `kubectl get chaos`: every chaos kind at once.
    ChaosAll,
}

impl ObjectKind {
    fn resource(self) -> &'static str {
        match self {
            ObjectKind::Deployment => "deployment",
            ObjectKind::Pod => "pod",
            ObjectKind::Hpa => "hpa",
            ObjectKind::StressChaos => "stresschaos",
            ObjectKind::NetworkChaos => "networkchaos",
            ObjectKind::PodChaos => "podchaos",
            ObjectKind::ChaosAll => "chaos",
        }
    }

    fn chaos_kind(self) -> Option<ChaosKind> {
        match self {
            ObjectKind::StressChaos => Some(ChaosKind::StressChaos),
            ObjectKind::NetworkChaos => Some(ChaosKind::NetworkChaos),
            ObjectKind::PodChaos => Some(ChaosKind::PodChaos),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResourceDim {
    Cpu,
    Memory,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputMode {
    Json,
    JsonPath(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Command {
    pub verb: Verb,
    pub kind: ObjectKind,
    pub name: Option<String>,
    pub namespace: String,
    pub replicas: Option<u32>,
    pub requests: Vec<(ResourceDim, ResourceQuantity)>,
    pub limits: Vec<(ResourceDim, ResourceQuantity)>,
    pub env: Vec<(String, String)>,
    pub output: Option<OutputMode>,
    pub record: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CmdResult {
    pub stdout: String,
    pub stderr: String,
    pub rc: i32,
    pub mutated: bool,
}

impl CmdResult {
    pub fn ok(stdout: impl Into<String>) -> Self {
        CmdResult {
            stdout: stdout.into(),
            stderr: String::new(),
            rc: 0,
            mutated: false,
        }
    }

    pub fn err(rc: i32, stderr: impl Into<String>) -> Self {
        CmdResult {
            stdout: String::new(),
            stderr: stderr.into(),
            rc,
            mutated: false,
        }
    }

    fn mutated(mut self) -> Self {
        self.mutated = true;
        self
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CmdError {
    #[error("parse error at token {offset}: {message}")]
    Parse { offset: usize, message: String },
    #[error("unsupported command: {0}")]
    Unsupported(String),
}

/// Shell-level token. `;`, `&&` and `||` separate commands; everything else
/// is a word. Single and double quotes group, including mid-word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Token {
    Word(String),
    Seq,
    And,
    Or,
}

pub fn tokenize(line: &str) -> Result<Vec<Token>, CmdError> {
    let mut tokens = Vec::new();
    let mut word = String::new();
    let mut has_word = false;
    let mut chars = line.chars().peekable();
    let flush = |word: &mut String, has_word: &mut bool, tokens: &mut Vec<Token>| {
        if *has_word {
            tokens.push(Token::Word(std::mem::take(word)));
            *has_word = false;
        }
    };
    while let Some(c) = chars.next() {
        match c {
            '\'' | '"' => {
                let quote = c;
                has_word = true;
                let mut closed = false;
                for q in chars.by_ref() {
                    if q == quote {
                        closed = true;
                        break;
                    }
                    word.push(q);
                }
                if !closed {
                    return Err(CmdError::Parse {
                        offset: line.len(),
                        message: format!("unterminated {quote} quote"),
                    });
                }
            }
            ';' => {
                flush(&mut word, &mut has_word, &mut tokens);
                tokens.push(Token::Seq);
            }
            '&' if chars.peek() == Some(&'&') => {
                chars.next();
                flush(&mut word, &mut has_word, &mut tokens);
                tokens.push(Token::And);
            }
            '|' if chars.peek() == Some(&'|') => {
                chars.next();
                flush(&mut word, &mut has_word, &mut tokens);
                tokens.push(Token::Or);
            }
            c if c.is_whitespace() => flush(&mut word, &mut has_word, &mut tokens),
            c => {
                has_word = true;
                word.push(c);
            }
        }
    }
    flush(&mut word, &mut has_word, &mut tokens);
    Ok(tokens)
}

/// Parse one kubectl command line. Commands without an explicit `-n` flag run
/// in `default_namespace` (the episode's namespace).
pub fn parse_command(line: &str, default_namespace: &str) -> Result<Command, CmdError> {
    let tokens = tokenize(line)?;
    let words: Vec<String> = tokens
        .into_iter()
        .map(|t| match t {
            Token::Word(w) => Ok(w),
            other => Err(CmdError::Parse {
                offset: 0,
                message: format!("unexpected shell operator {other:?} in single command"),
            }),
        })
        .collect::<Result<_, _>>()?;
    parse_words(&words, default_namespace)
}

fn parse_words(words: &[String], default_namespace: &str) -> Result<Command, CmdError> {
    let parse_err = |offset: usize, message: String| CmdError::Parse { offset, message };
    if words.is_empty() {
        return Err(parse_err(0, "empty command".into()));
    }
    if words[0] != "kubectl" {
        return Err(CmdError::Unsupported(words[0].clone()));
    }
    if words.len() < 2 {
        return Err(parse_err(1, "missing kubectl verb".into()));
    }

    let (verb, mut idx) = match words[1].as_str() {
        "get" => (Verb::Get, 2),
        "describe" => (Verb::Describe, 2),
        "top" => (Verb::Top, 2),
        "scale" => (Verb::Scale, 2),
        "set" => match words.get(2).map(String::as_str) {
            Some("resources") => (Verb::SetResources, 3),
            Some("env") => (Verb::SetEnv, 3),
            other => {
                return Err(CmdError::Unsupported(format!(
                    "set {}",
                    other.unwrap_or("")
                )))
            }
        },
        "rollout" => match words.get(2).map(String::as_str) {
            Some("restart") => (Verb::RolloutRestart, 3),
            other => {
                return Err(CmdError::Unsupported(format!(
                    "rollout {}",
                    other.unwrap_or("")
                )))
            }
        },
        "delete" => match words.get(2).map(String::as_str) {
            Some("pod") | Some("pods") => (Verb::DeletePod, 3),
            Some("stresschaos") | Some("networkchaos") | Some("podchaos") => (Verb::DeleteChaos, 2),
            Some(other) => return Err(CmdError::Unsupported(format!("delete {other}"))),
            None => return Err(parse_err(2, "delete requires a resource type".into())),
        },
        other => return Err(CmdError::Unsupported(other.to_string())),
    };

    // resolve the target kind (and name, when attached via `kind/name`)
    let kind;
    let mut name: Option<String> = None;
    match verb {
        Verb::Get | Verb::Describe => {
            let raw = words
                .get(idx)
                .ok_or_else(|| parse_err(idx, "missing resource type".into()))?;
            let (kind_word, attached) = split_kind_name(raw);
            kind = Some(parse_kind(kind_word, verb).map_err(|m| parse_err(idx, m))?);
            name = attached;
            idx += 1;
        }
        Verb::Top => {
            let raw = words
                .get(idx)
                .ok_or_else(|| parse_err(idx, "missing resource type".into()))?;
            if raw != "pod" && raw != "pods" {
                return Err(parse_err(idx, format!("top supports pods, not {raw:?}")));
            }
            kind = Some(ObjectKind::Pod);
            idx += 1;
        }
        Verb::Scale | Verb::SetResources | Verb::SetEnv | Verb::RolloutRestart => {
            let raw = words
                .get(idx)
                .ok_or_else(|| parse_err(idx, "missing deployment reference".into()))?;
            let (kind_word, attached) = split_kind_name(raw);
            if kind_word != "deployment" && kind_word != "deployments" && kind_word != "deploy" {
                return Err(parse_err(
                    idx,
                    format!("{verb:?} targets deployments, got {kind_word:?}"),
                ));
            }
            kind = Some(ObjectKind::Deployment);
            name = attached;
            idx += 1;
        }
        Verb::DeletePod => {
            kind = Some(ObjectKind::Pod);
        }
        Verb::DeleteChaos => {
            let raw = &words[idx];
            kind = Some(parse_kind(raw, verb).map_err(|m| parse_err(idx, m))?);
            idx += 1;
        }
        Verb::GetChaos => unreachable!("GetChaos is derived from Get below"),
    }

    let mut cmd = Command {
        verb,
        kind: kind.unwrap(),
        name,
        namespace: default_namespace.to_string(),
        replicas: None,
        requests: Vec::new(),
        limits: Vec::new(),
        env: Vec::new(),
        output: None,
        record: false,
    };
    // `get <chaoskind>` is its own verb so probe whitelists can name it
    if cmd.verb == Verb::Get
        && matches!(
            cmd.kind,
            ObjectKind::StressChaos
                | ObjectKind::NetworkChaos
                | ObjectKind::PodChaos
                | ObjectKind::ChaosAll
        )
    {
        cmd.verb = Verb::GetChaos;
    }

    // flags and positionals
    while idx < words.len() {
        let w = &words[idx];
        let mut take_value = |flag: &str| -> Result<String, CmdError> {
            if let Some(v) = w.strip_prefix(&format!("{flag}=")) {
                return Ok(v.to_string());
            }
            idx += 1;
            words
                .get(idx)
                .cloned()
                .ok_or_else(|| parse_err(idx, format!("flag {flag} requires a value")))
        };
        if w == "-n" || w == "--namespace" || w.starts_with("--namespace=") {
            cmd.namespace = take_value("--namespace")?;
        } else if w == "-o" || w == "--output" || w.starts_with("--output=") || w.starts_with("-o=")
        {
            let v = if let Some(v) = w.strip_prefix("-o=") {
                v.to_string()
            } else {
                take_value("--output")?
            };
            cmd.output = Some(parse_output(&v).map_err(|m| parse_err(idx, m))?);
        } else if w == "--replicas" || w.starts_with("--replicas=") {
            let v = take_value("--replicas")?;
            cmd.replicas = Some(
                v.parse()
                    .map_err(|_| parse_err(idx, format!("invalid replica count {v:?}")))?,
            );
        } else if w == "--requests" || w.starts_with("--requests=") {
            let v = take_value("--requests")?;
            cmd.requests = parse_assignments(&v).map_err(|m| parse_err(idx, m))?;
        } else if w == "--limits" || w.starts_with("--limits=") {
            let v = take_value("--limits")?;
            cmd.limits = parse_assignments(&v).map_err(|m| parse_err(idx, m))?;
        } else if w == "--record" {
            cmd.record = true;
        } else if w.starts_with("--") {
            return Err(parse_err(idx, format!("unknown flag {w:?}")));
        } else if cmd.verb == Verb::SetEnv && w.contains('=') {
            let (k, v) = w.split_once('=').unwrap();
            if k.is_empty() {
                return Err(parse_err(idx, format!("invalid env assignment {w:?}")));
            }
            cmd.env.push((k.to_string(), v.to_string()));
        } else if cmd.name.is_none() && !w.starts_with('-') {
            cmd.name = Some(w.clone());
        } else {
            return Err(parse_err(idx, format!("unexpected argument {w:?}")));
        }
        idx += 1;
    }

    validate(&cmd).map_err(|m| parse_err(0, m))?;
    Ok(cmd)
}

fn split_kind_name(raw: &str) -> (&str, Option<String>) {
    match raw.split_once('/') {
        Some((k, n)) => (k, Some(n.to_string())),
        None => (raw, None),
    }
}

fn parse_kind(word: &str, verb: Verb) -> Result<ObjectKind, String> {
    let kind = match word {
        "deployment" | "deployments" | "deploy" => ObjectKind::Deployment,
        "pod" | "pods" | "po" => ObjectKind::Pod,
        "hpa" | "horizontalpodautoscaler" | "horizontalpodautoscalers" => ObjectKind::Hpa,
        "stresschaos" => ObjectKind::StressChaos,
        "networkchaos" => ObjectKind::NetworkChaos,
        "podchaos" => ObjectKind::PodChaos,
        "chaos" => ObjectKind::ChaosAll,
        other => return Err(format!("unknown resource type {other:?}")),
    };
    if verb == Verb::DeleteChaos && kind == ObjectKind::ChaosAll {
        return Err("delete requires a concrete chaos kind".to_string());
    }
    Ok(kind)
}

fn parse_output(value: &str) -> Result<OutputMode, String> {
    if value == "json" {
        return Ok(OutputMode::Json);
    }
    if let Some(expr) = value.strip_prefix("jsonpath=") {
        return Ok(OutputMode::JsonPath(expr.to_string()));
    }
    Err(format!("unsupported output format {value:?}"))
}

fn parse_assignments(value: &str) -> Result<Vec<(ResourceDim, ResourceQuantity)>, String> {
    let mut out = Vec::new();
    for part in value.split(',') {
        let (res, qty) = part
            .split_once('=')
            .ok_or_else(|| format!("expected resource=quantity, got {part:?}"))?;
        let parsed = match res {
            "cpu" => (
                ResourceDim::Cpu,
                ResourceQuantity::parse_cpu(qty).map_err(|e| e.to_string())?,
            ),
            "memory" => (
                ResourceDim::Memory,
                ResourceQuantity::parse_mem(qty).map_err(|e| e.to_string())?,
            ),
            other => return Err(format!("unknown resource {other:?}")),
        };
        out.push(parsed);
    }
    if out.is_empty() {
        return Err("empty resource assignment".to_string());
    }
    Ok(out)
}

fn validate(cmd: &Command) -> Result<(), String> {
    let name_required = matches!(
        cmd.verb,
        Verb::Scale
            | Verb::SetResources
            | Verb::SetEnv
            | Verb::RolloutRestart
            | Verb::DeletePod
            | Verb::DeleteChaos
    );
    if name_required && cmd.name.is_none() {
        return Err(format!("{:?} requires an object name", cmd.verb));
    }
    if cmd.replicas.is_some() && cmd.verb != Verb::Scale {
        return Err("--replicas is only valid for scale".to_string());
    }
    if cmd.verb == Verb::Scale && cmd.replicas.is_none() {
        return Err("scale requires --replicas".to_string());
    }
    if (!cmd.requests.is_empty() || !cmd.limits.is_empty()) && cmd.verb != Verb::SetResources {
        return Err("--requests/--limits are only valid for set resources".to_string());
    }
    if cmd.verb == Verb::SetResources && cmd.requests.is_empty() && cmd.limits.is_empty() {
        return Err("set resources requires --requests or --limits".to_string());
    }
    if !cmd.env.is_empty() && cmd.verb != Verb::SetEnv {
        return Err("env assignments are only valid for set env".to_string());
    }
    if cmd.verb == Verb::SetEnv && cmd.env.is_empty() {
        return Err("set env requires at least one KEY=VALUE".to_string());
    }
    if cmd.output.is_some() && !matches!(cmd.verb, Verb::Get | Verb::GetChaos) {
        return Err("-o is only valid for get".to_string());
    }
    if cmd.record && !cmd.verb.is_mutating() {
        return Err("--record is only valid for mutating verbs".to_string());
    }
    Ok(())
}

/// Render a command in canonical form; `parse_command(render(cmd))` round-trips.
pub fn render(cmd: &Command) -> String {
    let mut s = String::from("kubectl ");
    let slash_target = |s: &mut String| {
        let _ = write!(s, "deployment/{}", cmd.name.as_deref().unwrap_or(""));
    };
    match cmd.verb {
        Verb::Get | Verb::GetChaos => {
            let _ = write!(s, "get {}", cmd.kind.resource());
            if let Some(n) = &cmd.name {
                let _ = write!(s, " {n}");
            }
        }
        Verb::Describe => {
            let _ = write!(s, "describe {}", cmd.kind.resource());
            if let Some(n) = &cmd.name {
                let _ = write!(s, " {n}");
            }
        }
        Verb::Top => {
            s.push_str("top pods");
            if let Some(n) = &cmd.name {
                let _ = write!(s, " {n}");
            }
        }
        Verb::Scale => {
            s.push_str("scale deployment ");
            s.push_str(cmd.name.as_deref().unwrap_or(""));
        }
        Verb::SetResources => {
            s.push_str("set resources ");
            slash_target(&mut s);
        }
        Verb::SetEnv => {
            s.push_str("set env ");
            slash_target(&mut s);
        }
        Verb::RolloutRestart => {
            s.push_str("rollout restart ");
            slash_target(&mut s);
        }
        Verb::DeletePod => {
            let _ = write!(s, "delete pod {}", cmd.name.as_deref().unwrap_or(""));
        }
        Verb::DeleteChaos => {
            let _ = write!(
                s,
                "delete {} {}",
                cmd.kind.resource(),
                cmd.name.as_deref().unwrap_or("")
            );
        }
    }
    let _ = write!(s, " -n {}", cmd.namespace);
    if let Some(r) = cmd.replicas {
        let _ = write!(s, " --replicas={r}");
    }
    for (flag, assignments) in [("--requests", &cmd.requests), ("--limits", &cmd.limits)] {
        if !assignments.is_empty() {
            let joined = assignments
                .iter()
                .map(|(dim, q)| match dim {
                    ResourceDim::Cpu => format!("cpu={}", q.format_cpu()),
                    ResourceDim::Memory => format!("memory={}", q.format_mem()),
                })
                .collect::<Vec<_>>()
                .join(",");
            let _ = write!(s, " {flag}={joined}");
        }
    }
    for (k, v) in &cmd.env {
        if v.chars().any(char::is_whitespace) || v.is_empty() {
            let _ = write!(s, " {k}='{v}'");
        } else {
            let _ = write!(s, " {k}={v}");
        }
    }
    match &cmd.output {
        Some(OutputMode::Json) => s.push_str(" -o json"),
        Some(OutputMode::JsonPath(expr)) => {
            let _ = write!(s, " -o jsonpath='{expr}'");
        }
        None => {}
    }
    if cmd.record {
        s.push_str(" --record");
    }
    s
}

/// Parse and execute a kubectl line, mapping parse failures onto rc 1 and
/// unsupported verbs onto rc 127.
pub fn exec_line(line: &str, state: &mut ClusterState, default_namespace: &str) -> CmdResult {
    match parse_command(line, default_namespace) {
        Ok(cmd) => execute(&cmd, state),
        Err(CmdError::Unsupported(what)) => {
            CmdResult::err(127, format!("unsupported in simulator: {what}"))
        }
        Err(e) => CmdResult::err(1, format!("error: {e}")),
    }
}

pub fn execute(cmd: &Command, state: &mut ClusterState) -> CmdResult {
    if cmd.namespace != state.namespace {
        return CmdResult::err(
            1,
            format!(
                "Error from server (NotFound): namespaces {:?} not found",
                cmd.namespace
            ),
        );
    }
    match cmd.verb {
        Verb::Get => exec_get(cmd, state),
        Verb::GetChaos => exec_get_chaos(cmd, state),
        Verb::Describe => exec_describe(cmd, state),
        Verb::Top => exec_top(cmd, state),
        Verb::Scale => exec_scale(cmd, state),
        Verb::SetResources => exec_set_resources(cmd, state),
        Verb::SetEnv => exec_set_env(cmd, state),
        Verb::RolloutRestart => exec_rollout_restart(cmd, state),
        Verb::DeletePod => exec_delete_pod(cmd, state),
        Verb::DeleteChaos => exec_delete_chaos(cmd, state),
    }
}

fn not_found(resource: &str, name: &str) -> CmdResult {
    CmdResult::err(
        1,
        format!("Error from server (NotFound): {resource} {name:?} not found"),
    )
}

fn render_output(value: &serde_json::Value, output: &Option<OutputMode>) -> CmdResult {
    match output {
        None => CmdResult::ok(String::new()),
        Some(OutputMode::Json) => {
            CmdResult::ok(serde_json::to_string_pretty(value).unwrap_or_default())
        }
        Some(OutputMode::JsonPath(expr)) => match jsonpath_eval(expr, value) {
            Ok(s) => CmdResult::ok(s),
            Err(e) => CmdResult::err(1, format!("error: {e}")),
        },
    }
}

fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for row in rows {
        for (i, cell) in row.iter().enumerate() {
            widths[i] = widths[i].max(cell.len());
        }
    }
    let mut out = String::new();
    let mut write_row = |cells: Vec<&str>| {
        let line = cells
            .iter()
            .enumerate()
            .map(|(i, c)| {
                if i + 1 == widths.len() {
                    c.to_string()
                } else {
                    format!("{:w$}", c, w = widths[i] + 3)
                }
            })
            .collect::<String>();
        out.push_str(line.trim_end());
        out.push('\n');
    };
    write_row(headers.to_vec());
    for row in rows {
        write_row(row.iter().map(String::as_str).collect());
    }
    out.trim_end().to_string()
}

fn exec_get(cmd: &Command, state: &mut ClusterState) -> CmdResult {
    match cmd.kind {
        ObjectKind::Deployment => match &cmd.name {
            Some(name) => match state.deployments.get(name) {
                Some(dep) => {
                    let value = objects::deployment_json(state, dep);
                    if cmd.output.is_none() {
                        return CmdResult::ok(deployment_table(state, std::slice::from_ref(name)));
                    }
                    render_output(&value, &cmd.output)
                }
                None => not_found("deployments.apps", name),
            },
            None => {
                let names: Vec<String> = state.deployments.keys().cloned().collect();
                if cmd.output.is_none() {
                    return CmdResult::ok(deployment_table(state, &names));
                }
                let items = names
                    .iter()
                    .map(|n| objects::deployment_json(state, &state.deployments[n]))
                    .collect();
                render_output(&objects::list_json(items), &cmd.output)
            }
        },
        ObjectKind::Pod => match &cmd.name {
            Some(name) => match state.pods.iter().find(|p| &p.uid == name) {
                Some(pod) => {
                    let value = objects::pod_json(state, pod);
                    if cmd.output.is_none() {
                        return CmdResult::ok(pod_table(state, Some(name)));
                    }
                    render_output(&value, &cmd.output)
                }
                None => not_found("pods", name),
            },
            None => {
                if cmd.output.is_none() {
                    return CmdResult::ok(pod_table(state, None));
                }
                let items = state
                    .pods
                    .iter()
                    .map(|p| objects::pod_json(state, p))
                    .collect();
                render_output(&objects::list_json(items), &cmd.output)
            }
        },
        ObjectKind::Hpa => match &cmd.name {
            Some(name) => not_found("horizontalpodautoscalers.autoscaling", name),
            None => CmdResult {
                stdout: String::new(),
                stderr: format!("No resources found in {} namespace.", state.namespace),
                rc: 0,
                mutated: false,
            },
        },
        _ => unreachable!("chaos kinds route to GetChaos"),
    }
}

fn deployment_table(state: &ClusterState, names: &[String]) -> String {
    let rows: Vec<Vec<String>> = names
        .iter()
        .filter_map(|n| state.deployments.get(n))
        .map(|dep| {
            let pods: Vec<_> = state.pods_of(&dep.name).collect();
            let ready = pods.iter().filter(|p| p.ready).count();
            let updated = pods
                .iter()
                .filter(|p| p.generation == dep.generation)
                .count();
            vec![
                dep.name.clone(),
                format!("{}/{}", ready, dep.desired_replicas),
                updated.to_string(),
                ready.to_string(),
            ]
        })
        .collect();
    table(&["NAME", "READY", "UP-TO-DATE", "AVAILABLE"], &rows)
}

fn pod_table(state: &ClusterState, only: Option<&str>) -> String {
    let rows: Vec<Vec<String>> = state
        .pods
        .iter()
        .filter(|p| only.map(|n| p.uid == n).unwrap_or(true))
        .map(|p| {
            vec![
                p.uid.clone(),
                format!("{}/1", if p.ready { 1 } else { 0 }),
                objects::phase_str(p.phase).to_string(),
                p.restart_count.to_string(),
            ]
        })
        .collect();
    table(&["NAME", "READY", "STATUS", "RESTARTS"], &rows)
}

fn exec_get_chaos(cmd: &Command, state: &mut ClusterState) -> CmdResult {
    let wanted = cmd.kind.chaos_kind();
    let matching: Vec<&crate::cluster::ChaosObject> = state
        .chaos
        .iter()
        .filter(|c| wanted.map(|k| c.kind == k).unwrap_or(true))
        .collect();
    match &cmd.name {
        Some(name) => match matching.iter().find(|c| &c.name == name) {
            Some(obj) => {
                if cmd.output.is_none() {
                    return CmdResult::ok(chaos_table(&[(*obj).clone()]));
                }
                render_output(&objects::chaos_json(obj), &cmd.output)
            }
            None => not_found(&format!("{}.chaos-mesh.org", cmd.kind.resource()), name),
        },
        None => {
            if matching.is_empty() {
                return CmdResult {
                    stdout: String::new(),
                    stderr: format!("No resources found in {} namespace.", state.namespace),
                    rc: 0,
                    mutated: false,
                };
            }
            if cmd.output.is_none() {
                let owned: Vec<_> = matching.iter().map(|c| (*c).clone()).collect();
                return CmdResult::ok(chaos_table(&owned));
            }
            let items = matching.iter().map(|c| objects::chaos_json(c)).collect();
            render_output(&objects::list_json(items), &cmd.output)
        }
    }
}

fn chaos_table(objs: &[crate::cluster::ChaosObject]) -> String {
    let rows: Vec<Vec<String>> = objs
        .iter()
        .map(|c| {
            let params = c
                .params
                .iter()
                .map(|(k, v)| format!("{k}={v}"))
                .collect::<Vec<_>>()
                .join(",");
            vec![
                c.name.clone(),
                c.kind.as_str().to_string(),
                c.selector_service.clone(),
                params,
            ]
        })
        .collect();
    table(&["NAME", "KIND", "SERVICE", "PARAMS"], &rows)
}

fn exec_describe(cmd: &Command, state: &mut ClusterState) -> CmdResult {
    match cmd.kind {
        ObjectKind::Hpa => match &cmd.name {
            Some(name) => not_found("horizontalpodautoscalers.autoscaling", name),
            None => CmdResult {
                stdout: String::new(),
                stderr: format!("No resources found in {} namespace.", state.namespace),
                rc: 0,
                mutated: false,
            },
        },
        ObjectKind::Deployment => {
            let names: Vec<String> = match &cmd.name {
                Some(n) => {
                    if !state.deployments.contains_key(n) {
                        return not_found("deployments.apps", n);
                    }
                    vec![n.clone()]
                }
                None => state.deployments.keys().cloned().collect(),
            };
            let text = names
                .iter()
                .map(|n| describe_deployment(state, &state.deployments[n]))
                .collect::<Vec<_>>()
                .join("\n\n");
            CmdResult::ok(text)
        }
        ObjectKind::Pod => {
            let pods: Vec<&crate::cluster::PodInstance> = match &cmd.name {
                Some(n) => match state.pods.iter().find(|p| &p.uid == n) {
                    Some(p) => vec![p],
                    None => return not_found("pods", n),
                },
                None => state.pods.iter().collect(),
            };
            let text = pods
                .iter()
                .map(|p| describe_pod(state, p))
                .collect::<Vec<_>>()
                .join("\n\n");
            CmdResult::ok(text)
        }
        ObjectKind::StressChaos
        | ObjectKind::NetworkChaos
        | ObjectKind::PodChaos
        | ObjectKind::ChaosAll => {
            let wanted = cmd.kind.chaos_kind();
            let objs: Vec<crate::cluster::ChaosObject> = state
                .chaos
                .iter()
                .filter(|c| wanted.map(|k| c.kind == k).unwrap_or(true))
                .filter(|c| cmd.name.as_ref().map(|n| &c.name == n).unwrap_or(true))
                .cloned()
                .collect();
            if objs.is_empty() {
                if let Some(n) = &cmd.name {
                    return not_found(&format!("{}.chaos-mesh.org", cmd.kind.resource()), n);
                }
                return CmdResult {
                    stdout: String::new(),
                    stderr: format!("No resources found in {} namespace.", state.namespace),
                    rc: 0,
                    mutated: false,
                };
            }
            CmdResult::ok(chaos_table(&objs))
        }
    }
}

fn describe_deployment(state: &ClusterState, dep: &crate::cluster::Deployment) -> String {
    let pods: Vec<_> = state.pods_of(&dep.name).collect();
    let ready = pods.iter().filter(|p| p.ready).count();
    let updated = pods
        .iter()
        .filter(|p| p.generation == dep.generation)
        .count();
    let mut s = String::new();
    let _ = writeln!(s, "Name:         {}", dep.name);
    let _ = writeln!(s, "Namespace:    {}", dep.namespace);
    let _ = writeln!(s, "Generation:   {}", dep.generation);
    let _ = writeln!(
        s,
        "Replicas:     {} desired | {} updated | {} total | {} ready",
        dep.desired_replicas,
        updated,
        pods.len(),
        ready
    );
    if !dep.annotations.is_empty() {
        let _ = writeln!(s, "Annotations:");
        for (k, v) in &dep.annotations {
            let _ = writeln!(s, "  {k}: {v}");
        }
    }
    let _ = writeln!(s, "Pod Template:");
    let _ = writeln!(s, "  Containers:");
    let _ = writeln!(s, "   {}:", dep.name);
    let _ = writeln!(s, "    Image:      {}", dep.template.image);
    let _ = writeln!(s, "    Limits:");
    let _ = writeln!(
        s,
        "      cpu:      {}",
        dep.template.limits_cpu.format_cpu()
    );
    let _ = writeln!(
        s,
        "      memory:   {}",
        dep.template.limits_mem.format_mem()
    );
    let _ = writeln!(s, "    Requests:");
    let _ = writeln!(
        s,
        "      cpu:      {}",
        dep.template.requests_cpu.format_cpu()
    );
    let _ = writeln!(
        s,
        "      memory:   {}",
        dep.template.requests_mem.format_mem()
    );
    let _ = writeln!(s, "    Environment:");
    for (k, v) in &dep.template.env {
        let _ = writeln!(s, "      {k}: {v}");
    }
    s.trim_end().to_string()
}

fn describe_pod(state: &ClusterState, pod: &crate::cluster::PodInstance) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "Name:         {}", pod.uid);
    let _ = writeln!(s, "Namespace:    {}", state.namespace);
    let _ = writeln!(s, "Controlled By:  Deployment/{}", pod.deployment);
    let _ = writeln!(s, "Status:       {}", objects::phase_str(pod.phase));
    let _ = writeln!(s, "Ready:        {}", pod.ready);
    let _ = writeln!(s, "Restart Count:  {}", pod.restart_count);
    s.trim_end().to_string()
}

fn exec_top(cmd: &Command, state: &mut ClusterState) -> CmdResult {
    let mut rows = Vec::new();
    for dep_name in state.deployments.keys() {
        let metrics = state.observe(dep_name).expect("deployment exists");
        for pm in &metrics.pods {
            if let Some(only) = &cmd.name {
                if &pm.uid != only {
                    continue;
                }
            }
            rows.push(vec![
                pm.uid.clone(),
                format!("{}m", pm.cpu_millis_used),
                format!("{}Mi", pm.mem_mib_used),
            ]);
        }
    }
    if let Some(only) = &cmd.name {
        if rows.is_empty() {
            return not_found("pods", only);
        }
    }
    rows.sort();
    CmdResult::ok(table(&["NAME", "CPU(cores)", "MEMORY(bytes)"], &rows))
}

fn exec_scale(cmd: &Command, state: &mut ClusterState) -> CmdResult {
    let name = cmd.name.as_deref().unwrap();
    let Some(dep) = state.deployments.get_mut(name) else {
        return not_found("deployments.apps", name);
    };
    dep.desired_replicas = cmd.replicas.unwrap();
    if cmd.record {
        record_annotation(state, name, cmd);
    }
    state.reconcile();
    CmdResult::ok(format!("deployment.apps/{name} scaled")).mutated()
}

fn exec_set_resources(cmd: &Command, state: &mut ClusterState) -> CmdResult {
    let name = cmd.name.as_deref().unwrap();
    if !state.deployments.contains_key(name) {
        return not_found("deployments.apps", name);
    }
    {
        let dep = state.deployments.get_mut(name).unwrap();
        let mut template = dep.template.clone();
        for (dim, q) in &cmd.requests {
            match dim {
                ResourceDim::Cpu => template.requests_cpu = *q,
                ResourceDim::Memory => template.requests_mem = *q,
            }
        }
        for (dim, q) in &cmd.limits {
            match dim {
                ResourceDim::Cpu => template.limits_cpu = *q,
                ResourceDim::Memory => template.limits_mem = *q,
            }
        }
        if template.requests_cpu > template.limits_cpu
            || template.requests_mem > template.limits_mem
        {
            return CmdResult::err(
                1,
                format!("error: requests must not exceed limits for deployment/{name}"),
            );
        }
        dep.template = template;
        dep.generation += 1;
    }
    if cmd.record {
        record_annotation(state, name, cmd);
    }
    state.reconcile();
    CmdResult::ok(format!(
        "deployment.apps/{name} resource requirements updated"
    ))
    .mutated()
}

fn exec_set_env(cmd: &Command, state: &mut ClusterState) -> CmdResult {
    let name = cmd.name.as_deref().unwrap();
    let Some(dep) = state.deployments.get_mut(name) else {
        return not_found("deployments.apps", name);
    };
    for (k, v) in &cmd.env {
        dep.template.env.insert(k.clone(), v.clone());
    }
    dep.generation += 1;
    if cmd.record {
        record_annotation(state, name, cmd);
    }
    state.reconcile();
    CmdResult::ok(format!("deployment.apps/{name} env updated")).mutated()
}

fn exec_rollout_restart(cmd: &Command, state: &mut ClusterState) -> CmdResult {
    let name = cmd.name.as_deref().unwrap();
    let Some(dep) = state.deployments.get_mut(name) else {
        return not_found("deployments.apps", name);
    };
    dep.generation += 1;
    state.reconcile();
    CmdResult::ok(format!("deployment.apps/{name} restarted")).mutated()
}

fn exec_delete_pod(cmd: &Command, state: &mut ClusterState) -> CmdResult {
    let name = cmd.name.as_deref().unwrap();
    let before = state.pods.len();
    state.pods.retain(|p| p.uid != name);
    if state.pods.len() == before {
        return not_found("pods", name);
    }
    state.reconcile();
    CmdResult::ok(format!("pod {name:?} deleted")).mutated()
}

fn exec_delete_chaos(cmd: &Command, state: &mut ClusterState) -> CmdResult {
    let name = cmd.name.as_deref().unwrap();
    let wanted = cmd.kind.chaos_kind().expect("delete has concrete kind");
    let before = state.chaos.len();
    state
        .chaos
        .retain(|c| !(c.name == name && c.kind == wanted));
    if state.chaos.len() == before {
        return not_found(&format!("{}.chaos-mesh.org", cmd.kind.resource()), name);
    }
    state.reconcile();
    CmdResult::ok(format!(
        "{}.chaos-mesh.org {:?} deleted",
        cmd.kind.resource(),
        name
    ))
    .mutated()
}

fn record_annotation(state: &mut ClusterState, name: &str, cmd: &Command) {
    if let Some(dep) = state.deployments.get_mut(name) {
        dep.annotations
            .insert("kubernetes.io/change-cause".to_string(), render(cmd));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::{load_topology, topology};

    fn tt_state() -> ClusterState {
        load_topology(topology::TT_LIKE).unwrap()
    }

    #[test]
    fn parse_scale_command() {
        let cmd = parse_command(
            "kubectl scale deployment ts-news-service --namespace=train-ticket --replicas=3",
            "default",
        )
        .unwrap();
        assert_eq!(cmd.verb, Verb::Scale);
        assert_eq!(cmd.name.as_deref(), Some("ts-news-service"));
        assert_eq!(cmd.namespace, "train-ticket");
        assert_eq!(cmd.replicas, Some(3));
    }

    #[test]
    fn parse_set_resources_command() {
        let cmd = parse_command(
            "kubectl set resources deployment/ts-news-service -n train-ticket --requests=cpu=500m --limits=cpu=1000m --record",
            "default",
        )
        .unwrap();
        assert_eq!(cmd.verb, Verb::SetResources);
        assert_eq!(cmd.name.as_deref(), Some("ts-news-service"));
        assert_eq!(
            cmd.requests,
            vec![(ResourceDim::Cpu, ResourceQuantity::from_millis(500))]
        );
        assert_eq!(
            cmd.limits,
            vec![(ResourceDim::Cpu, ResourceQuantity::from_millis(1000))]
        );
        assert!(cmd.record);
    }

    #[test]
    fn parse_describe_hpa() {
        let cmd =
            parse_command("kubectl describe hpa ts-news-service -n train-ticket", "d").unwrap();
        assert_eq!(cmd.verb, Verb::Describe);
        assert_eq!(cmd.kind, ObjectKind::Hpa);
        assert_eq!(cmd.name.as_deref(), Some("ts-news-service"));
    }

    #[test]
    fn unknown_verb_is_unsupported() {
        assert!(matches!(
            parse_command("kubectl apply -f x.yaml", "d"),
            Err(CmdError::Unsupported(_))
        ));
        assert!(matches!(
            parse_command("top -bn1", "d"),
            Err(CmdError::Unsupported(_))
        ));
    }

    #[test]
    fn default_namespace_applies() {
        let cmd = parse_command("kubectl get deployment x", "train-ticket").unwrap();
        assert_eq!(cmd.namespace, "train-ticket");
    }

    #[test]
    fn jsonpath_probe_replicas_and_limits() {
        let mut state = tt_state();
        let r = exec_line(
            "kubectl get deployment ts-news-service -n train-ticket -o jsonpath='{.spec.replicas}'",
            &mut state,
            "train-ticket",
        );
        assert_eq!((r.rc, r.stdout.as_str()), (0, "1"));
        let r = exec_line(
            "kubectl get deployment ts-news-service -n train-ticket -o jsonpath='{.spec.template.spec.containers[0].resources.limits.cpu}'",
            &mut state,
            "train-ticket",
        );
        assert_eq!((r.rc, r.stdout.as_str()), (0, "500m"));
    }

    #[test]
    fn set_resources_then_probe_new_limit() {
        let mut state = tt_state();
        let r = exec_line(
            "kubectl set resources deployment/ts-news-service -n train-ticket --requests=cpu=500m --limits=cpu=1000m --record",
            &mut state,
            "train-ticket",
        );
        assert_eq!(r.rc, 0, "stderr: {}", r.stderr);
        assert!(r.mutated);
        let r = exec_line(
            "kubectl get deployment ts-news-service -n train-ticket -o jsonpath='{.spec.template.spec.containers[0].resources.limits.cpu}'",
            &mut state,
            "train-ticket",
        );
        assert_eq!(r.stdout, "1000m");
    }

    #[test]
    fn describe_hpa_not_found() {
        let mut state = tt_state();
        let r = exec_line(
            "kubectl describe hpa ts-news-service -n train-ticket",
            &mut state,
            "train-ticket",
        );
        assert_eq!(r.rc, 1);
        assert!(
            r.stderr.starts_with("Error from server (NotFound)"),
            "{}",
            r.stderr
        );
    }

    #[test]
    fn scale_output_goes_to_stdout() {
        let mut state = tt_state();
        let r = exec_line(
            "kubectl scale deployment ts-news-service --namespace=train-ticket --replicas=3",
            &mut state,
            "train-ticket",
        );
        assert_eq!(r.stdout, "deployment.apps/ts-news-service scaled");
        assert!(r.stderr.is_empty());
        assert_eq!(state.pods_of("ts-news-service").count(), 3);
    }

    #[test]
    fn read_verbs_leave_state_unchanged() {
        let mut state = tt_state();
        let fp = state.fingerprint();
        for line in [
            "kubectl get deployment ts-news-service -n train-ticket -o json",
            "kubectl get pods -n train-ticket",
            "kubectl describe deployment ts-news-service -n train-ticket",
            "kubectl top pods -n train-ticket",
            "kubectl get chaos -n train-ticket",
            "kubectl describe hpa x -n train-ticket",
        ] {
            let r = exec_line(line, &mut state, "train-ticket");
            assert!(!r.mutated, "{line} reported mutation");
            assert_eq!(state.fingerprint(), fp, "{line} changed state");
        }
    }

    #[test]
    fn unknown_object_rc1_invalid_quantity_rc1() {
        let mut state = tt_state();
        let r = exec_line(
            "kubectl scale deployment ghost --replicas=2 -n train-ticket",
            &mut state,
            "train-ticket",
        );
        assert_eq!(r.rc, 1);
        let r = exec_line(
            "kubectl set resources deployment/ts-news-service -n train-ticket --limits=cpu=banana",
            &mut state,
            "train-ticket",
        );
        assert_eq!(r.rc, 1);
    }

    #[test]
    fn unsupported_verbs_exec_as_rc_127() {
        let mut state = tt_state();
        for line in [
            "kubectl apply -f x.yaml",
            "kubectl patch deployment x -n train-ticket",
            "kubectl rollout status deployment/x",
            "kubectl delete deployment x -n train-ticket",
        ] {
            let r = exec_line(line, &mut state, "train-ticket");
            assert_eq!(r.rc, 127, "{line}");
            assert!(
                r.stderr.starts_with("unsupported in simulator:"),
                "{}",
                r.stderr
            );
        }
    }

    #[test]
    fn wrong_namespace_not_found() {
        let mut state = tt_state();
        let r = exec_line(
            "kubectl get deployment ts-news-service -n online-boutique",
            &mut state,
            "train-ticket",
        );
        assert_eq!(r.rc, 1);
        assert!(r.stderr.contains("namespaces"));
    }

    #[test]
    fn render_round_trips_hand_cases() {
        for line in [
            "kubectl get deployment ts-news-service -n train-ticket -o jsonpath='{.spec.replicas}'",
            "kubectl scale deployment ts-news-service -n train-ticket --replicas=3",
            "kubectl set resources deployment/x -n ns --requests=cpu=100m,memory=64Mi --limits=cpu=200m --record",
            "kubectl set env deployment/x -n ns KEY=VALUE OTHER='two words'",
            "kubectl delete stresschaos cpu-saturation-x -n ns",
            "kubectl top pods -n ns",
        ] {
            let cmd = parse_command(line, "d").unwrap();
            let rendered = render(&cmd);
            let reparsed = parse_command(&rendered, "d").unwrap();
            assert_eq!(cmd, reparsed, "line: {line} rendered: {rendered}");
        }
    }
}
