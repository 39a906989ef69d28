//! Parser and interpreter for the restricted Ansible playbook dialect
//! remediation policies emit: plays with `command`/`shell` tasks, `register`
//! variables, `when`/`failed_when`/`changed_when` conditions, `ignore_errors`,
//! and a mini-shell for composition. The grammar is documented in
//! `docs/playbook-dialect.md`.

pub mod expr;
pub mod run;
pub mod shell;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};
use serde_yaml::Value;
use thiserror::Error;

pub use expr::{eval_expr, parse_expr, EvalError, Expr, TaskVars};
pub use run::{run_playbook, RunStatus, TaskRecord, Transcript};
pub use shell::run_line as run_shell;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TaskModule {
    Command,
    Shell,
}

/// Ansible modules we recognize but do not implement; naming them in errors
/// beats a generic "unknown keyword".
const FOREIGN_MODULES: &[&str] = &[
    "k8s",
    "yum",
    "apt",
    "copy",
    "file",
    "service",
    "systemd",
    "uri",
    "debug",
    "template",
    "lineinfile",
    "set_fact",
    "git",
    "raw",
    "script",
    "fetch",
    "cron",
    "user",
];

#[derive(Debug, Clone, PartialEq)]
pub struct Task {
    pub name: String,
    pub module: TaskModule,
    pub line: String,
    pub register: Option<String>,
    pub when: Option<Expr>,
    pub failed_when: Option<Expr>,
    pub changed_when: Option<Expr>,
    pub ignore_errors: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Play {
    pub name: String,
    pub hosts: String,
    pub r#become: bool,
    pub tasks: Vec<Task>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Playbook {
    pub plays: Vec<Play>,
}

#[derive(Debug, Error)]
pub enum PlaybookError {
    #[error("playbook markup error at line {line}: {message}")]
    Yaml { line: usize, message: String },
    #[error("{path}: {message}")]
    Schema { path: String, message: String },
    #[error("{path}: unsupported module: {module} (supported: command, shell)")]
    UnsupportedModule { path: String, module: String },
    #[error("{path}: unsupported keyword: {keyword}")]
    UnsupportedKeyword { path: String, keyword: String },
    #[error("{path}: {source}")]
    Expr {
        path: String,
        source: expr::ExprParseError,
    },
    #[error("unknown host group {0:?}")]
    UnknownHostGroup(String),
}

/// Host inventory. Resolution is alias matching only: a play's `hosts` must
/// name a declared group, a declared host, or `all`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Inventory {
    pub content: String,
    groups: IndexMap<String, Vec<String>>,
}

impl Inventory {
    pub fn parse(content: &str) -> Self {
        let mut groups: IndexMap<String, Vec<String>> = IndexMap::new();
        let mut current: Option<String> = None;
        for line in content.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if let Some(group) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = Some(group.to_string());
                groups.entry(group.to_string()).or_default();
                continue;
            }
            let host = line.split_whitespace().next().unwrap_or("").to_string();
            match &current {
                Some(g) => groups.get_mut(g).unwrap().push(host),
                None => {
                    groups
                        .entry("ungrouped".to_string())
                        .or_default()
                        .push(host);
                }
            }
        }
        Inventory {
            content: content.to_string(),
            groups,
        }
    }

    pub fn resolves(&self, hosts: &str) -> bool {
        hosts == "all"
            || self.groups.contains_key(hosts)
            || self
                .groups
                .values()
                .any(|members| members.iter().any(|h| h == hosts))
    }
}

impl Default for Inventory {
    fn default() -> Self {
        Inventory::parse(
            "[k3s_control_plane]\nlocalhost ansible_connection=local\n\n[microservice_nodes]\nlocalhost ansible_connection=local\n",
        )
    }
}

/// Strip a wrapping markdown code fence, if present.
fn strip_code_fence(text: &str) -> &str {
    let trimmed = text.trim();
    if !trimmed.starts_with("```") {
        return text;
    }
    let Some(first_newline) = trimmed.find('\n') else {
        return text;
    };
    let body = &trimmed[first_newline + 1..];
    match body.rfind("```") {
        Some(fence) => &body[..fence],
        None => body,
    }
}

pub fn parse_playbook(text: &str) -> Result<Playbook, PlaybookError> {
    let text = strip_code_fence(text);
    let doc: Value = serde_yaml::from_str(text).map_err(|e| PlaybookError::Yaml {
        line: e.location().map(|l| l.line()).unwrap_or(0),
        message: e.to_string(),
    })?;
    let plays_seq = doc.as_sequence().ok_or_else(|| PlaybookError::Schema {
        path: "playbook".into(),
        message: "expected a sequence of plays".into(),
    })?;
    if plays_seq.is_empty() {
        return Err(PlaybookError::Schema {
            path: "playbook".into(),
            message: "playbook must contain at least one play".into(),
        });
    }
    let mut plays = Vec::with_capacity(plays_seq.len());
    for (i, play) in plays_seq.iter().enumerate() {
        plays.push(parse_play(play, &format!("plays[{i}]"))?);
    }
    Ok(Playbook { plays })
}

fn parse_play(value: &Value, path: &str) -> Result<Play, PlaybookError> {
    let map = value.as_mapping().ok_or_else(|| PlaybookError::Schema {
        path: path.into(),
        message: "expected a mapping".into(),
    })?;
    let mut name = String::new();
    let mut hosts = None;
    let mut r#become = false;
    let mut tasks = Vec::new();
    for (k, v) in map {
        let key = key_str(k, path)?;
        match key.as_str() {
            "name" => name = string_value(v, path, "name")?,
            "hosts" => hosts = Some(string_value(v, path, "hosts")?),
            "become" => r#become = bool_value(v, path, "become")?,
            "tasks" => {
                let seq = v.as_sequence().ok_or_else(|| PlaybookError::Schema {
                    path: format!("{path}.tasks"),
                    message: "expected a sequence of tasks".into(),
                })?;
                for (i, t) in seq.iter().enumerate() {
                    tasks.push(parse_task(t, &format!("{path}.tasks[{i}]"))?);
                }
            }
            other => {
                return Err(PlaybookError::UnsupportedKeyword {
                    path: path.into(),
                    keyword: other.to_string(),
                })
            }
        }
    }
    let hosts = hosts.ok_or_else(|| PlaybookError::Schema {
        path: path.into(),
        message: "play is missing hosts".into(),
    })?;
    Ok(Play {
        name,
        hosts,
        r#become,
        tasks,
    })
}

fn parse_task(value: &Value, path: &str) -> Result<Task, PlaybookError> {
    let map = value.as_mapping().ok_or_else(|| PlaybookError::Schema {
        path: path.into(),
        message: "expected a mapping".into(),
    })?;
    let mut name = String::new();
    let mut action: Option<(TaskModule, String)> = None;
    let mut register = None;
    let mut when = None;
    let mut failed_when = None;
    let mut changed_when = None;
    let mut ignore_errors = false;

    for (k, v) in map {
        let key = key_str(k, path)?;
        match key.as_str() {
            "name" => name = string_value(v, path, "name")?,
            "command" | "shell" => {
                let module = if key == "command" {
                    TaskModule::Command
                } else {
                    TaskModule::Shell
                };
                if action.is_some() {
                    return Err(PlaybookError::Schema {
                        path: path.into(),
                        message: "task declares more than one action module".into(),
                    });
                }
                action = Some((module, string_value(v, path, &key)?));
            }
            "args" => {
                // `args.executable` appears in generated playbooks; parsed and
                // ignored, like `become`
                let args = v.as_mapping().ok_or_else(|| PlaybookError::Schema {
                    path: format!("{path}.args"),
                    message: "expected a mapping".into(),
                })?;
                for (ak, _) in args {
                    let akey = key_str(ak, path)?;
                    if akey != "executable" {
                        return Err(PlaybookError::UnsupportedKeyword {
                            path: format!("{path}.args"),
                            keyword: akey,
                        });
                    }
                }
            }
            "register" => {
                let ident = string_value(v, path, "register")?;
                let valid = ident
                    .chars()
                    .next()
                    .map(|c| c.is_ascii_alphabetic() || c == '_')
                    .unwrap_or(false)
                    && ident.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
                if !valid {
                    return Err(PlaybookError::Schema {
                        path: path.into(),
                        message: format!("invalid register identifier {ident:?}"),
                    });
                }
                register = Some(ident);
            }
            "when" => when = Some(expr_value(v, path, "when")?),
            "failed_when" => failed_when = Some(expr_value(v, path, "failed_when")?),
            "changed_when" => changed_when = Some(expr_value(v, path, "changed_when")?),
            "ignore_errors" => ignore_errors = bool_value(v, path, "ignore_errors")?,
            other if FOREIGN_MODULES.contains(&other) => {
                return Err(PlaybookError::UnsupportedModule {
                    path: path.into(),
                    module: other.to_string(),
                })
            }
            other => {
                return Err(PlaybookError::UnsupportedKeyword {
                    path: path.into(),
                    keyword: other.to_string(),
                })
            }
        }
    }

    let (module, line) = action.ok_or_else(|| PlaybookError::Schema {
        path: path.into(),
        message: "task declares no action module (command or shell)".into(),
    })?;
    Ok(Task {
        name,
        module,
        line,
        register,
        when,
        failed_when,
        changed_when,
        ignore_errors,
    })
}

fn key_str(k: &Value, path: &str) -> Result<String, PlaybookError> {
    k.as_str()
        .map(str::to_string)
        .ok_or_else(|| PlaybookError::Schema {
            path: path.into(),
            message: format!("expected string key, found {k:?}"),
        })
}

fn string_value(v: &Value, path: &str, key: &str) -> Result<String, PlaybookError> {
    match v {
        Value::String(s) => Ok(s.clone()),
        Value::Number(n) => Ok(n.to_string()),
        other => Err(PlaybookError::Schema {
            path: format!("{path}.{key}"),
            message: format!("expected a string, found {other:?}"),
        }),
    }
}

fn bool_value(v: &Value, path: &str, key: &str) -> Result<bool, PlaybookError> {
    match v {
        Value::Bool(b) => Ok(*b),
        Value::String(s) => match s.as_str() {
            "yes" | "true" | "True" => Ok(true),
            "no" | "false" | "False" => Ok(false),
            other => Err(PlaybookError::Schema {
                path: format!("{path}.{key}"),
                message: format!("expected a boolean, found {other:?}"),
            }),
        },
        other => Err(PlaybookError::Schema {
            path: format!("{path}.{key}"),
            message: format!("expected a boolean, found {other:?}"),
        }),
    }
}

fn expr_value(v: &Value, path: &str, key: &str) -> Result<Expr, PlaybookError> {
    let text = string_value(v, path, key)?;
    parse_expr(&text).map_err(|source| PlaybookError::Expr {
        path: format!("{path}.{key}"),
        source,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALE_PLAYBOOK: &str = r#"---
- name: Remediate CPU stress on ts-news-service
  hosts: k3s_control_plane
  tasks:
    - name: Scale deployment to increase replicas
      command: kubectl scale deployment ts-news-service --namespace=train-ticket --replicas=3
      args:
        executable: /bin/bash
      register: scale_result
      ignore_errors: yes
      changed_when: "'scaled to' in scale_result.stderr"
    - name: Verify deployment scale
      command: kubectl get deployment ts-news-service -n train-ticket -o jsonpath='{.spec.replicas}'
      register: verify_result
      failed_when: verify_result.stdout | int < 3
"#;

    #[test]
    fn scale_playbook_structure() {
        let pb = parse_playbook(SCALE_PLAYBOOK).unwrap();
        assert_eq!(pb.plays.len(), 1);
        let play = &pb.plays[0];
        assert_eq!(play.hosts, "k3s_control_plane");
        assert_eq!(play.tasks.len(), 2);
        assert!(play.tasks[0].ignore_errors);
        assert!(play.tasks[0].changed_when.is_some());
        assert_eq!(play.tasks[1].register.as_deref(), Some("verify_result"));
        assert!(play.tasks[1].failed_when.is_some());
    }

    #[test]
    fn limits_playbook_structure() {
        let text = r#"---
- name: Remediate CPU stress via resource adjustment
  hosts: k3s_control_plane
  tasks:
    - name: Increase CPU limits for ts-news-service pods
      command: kubectl set resources deployment/ts-news-service -n train-ticket --requests=cpu=500m --limits=cpu=1000m --record
      args:
        executable: /bin/bash
      register: resource_update
      ignore_errors: yes
    - name: Trigger deployment rollout
      command: kubectl rollout restart deployment/ts-news-service -n train-ticket
      args:
        executable: /bin/bash
      register: rollout_result
      ignore_errors: yes
    - name: Verify CPU resource allocation
      command: kubectl get deployment ts-news-service -n train-ticket -o jsonpath='{.spec.template.spec.containers[0].resources.limits.cpu}'
      register: verify_limit
      failed_when: verify_limit.stdout != '1000m'
"#;
        let pb = parse_playbook(text).unwrap();
        assert_eq!(pb.plays.len(), 1);
        assert_eq!(pb.plays[0].tasks.len(), 3);
    }

    #[test]
    fn unsupported_module_is_named() {
        let text =
            "---\n- hosts: all\n  tasks:\n    - name: x\n      k8s:\n        state: present\n";
        match parse_playbook(text) {
            Err(PlaybookError::UnsupportedModule { module, .. }) => assert_eq!(module, "k8s"),
            other => panic!("expected UnsupportedModule, got {other:?}"),
        }
    }

    #[test]
    fn loop_keyword_rejected() {
        let text =
            "---\n- hosts: all\n  tasks:\n    - name: x\n      command: echo hi\n      loop: [1, 2]\n";
        match parse_playbook(text) {
            Err(PlaybookError::UnsupportedKeyword { keyword, .. }) => assert_eq!(keyword, "loop"),
            other => panic!("expected UnsupportedKeyword, got {other:?}"),
        }
    }

    #[test]
    fn code_fence_wrapper_is_stripped() {
        let fenced = format!("```yaml\n{SCALE_PLAYBOOK}```\n");
        let pb = parse_playbook(&fenced).unwrap();
        assert_eq!(pb.plays[0].tasks.len(), 2);
    }

    #[test]
    fn markup_error_carries_line() {
        match parse_playbook("- hosts: all\n  tasks: [\n") {
            Err(PlaybookError::Yaml { line, .. }) => assert!(line > 0),
            other => panic!("expected yaml error, got {other:?}"),
        }
    }

    #[test]
    fn empty_playbook_rejected() {
        assert!(parse_playbook("[]").is_err());
    }

    #[test]
    fn inventory_alias_matching() {
        let inv = Inventory::default();
        assert!(inv.resolves("k3s_control_plane"));
        assert!(inv.resolves("microservice_nodes"));
        assert!(inv.resolves("all"));
        assert!(inv.resolves("localhost"));
        assert!(!inv.resolves("db_nodes"));
    }
}
