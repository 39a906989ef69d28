//! Sequential playbook execution against a cluster instance.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::expr::{eval_expr, TaskVars};
use super::shell;
use super::{Inventory, Playbook, PlaybookError, TaskModule};
use crate::cluster::ClusterState;
use crate::kubecmd::CmdResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RunStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub task: String,
    pub command: String,
    pub result: CmdResult,
    pub skipped: bool,
    pub failed: bool,
    pub changed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub records: Vec<TaskRecord>,
    pub status: RunStatus,
    pub summary: String,
    /// Instants during execution where a previously healthy service had zero
    /// ready pods. Advisory: recorded, never failing a task by itself.
    pub availability_violations: u32,
}

impl Transcript {
    pub fn ok(&self) -> bool {
        self.status == RunStatus::Ok
    }

    pub fn status_word(&self) -> &'static str {
        match self.status {
            RunStatus::Ok => "ok",
            RunStatus::Failed => "failed",
        }
    }
}

/// Run every play in order against `state`. Tasks execute sequentially; a
/// false `when` skips, `register` stores the result for later expressions,
/// `failed_when` overrides the module rc, `ignore_errors` downgrades failure
/// to recorded-but-continuing, and the simulated clock advances one second per
/// executed task. Execution halts at the first non-ignored failure.
pub fn run_playbook(
    pb: &Playbook,
    state: &mut ClusterState,
    inventory: &Inventory,
) -> Result<Transcript, PlaybookError> {
    for play in &pb.plays {
        if !inventory.resolves(&play.hosts) {
            return Err(PlaybookError::UnknownHostGroup(play.hosts.clone()));
        }
    }

    let healthy_at_start: Vec<String> = state
        .deployments
        .keys()
        .filter(|name| state.pods_of(name).any(|p| p.ready))
        .cloned()
        .collect();

    let mut vars: HashMap<String, TaskVars> = HashMap::new();
    let mut records = Vec::new();
    let mut availability_violations = 0u32;
    let mut overall_failed = false;

    'plays: for play in &pb.plays {
        for task in &play.tasks {
            let mut note = None;

            if let Some(when) = &task.when {
                match eval_expr(when, &vars) {
                    Ok(true) => {}
                    Ok(false) => {
                        records.push(TaskRecord {
                            task: task.name.clone(),
                            command: task.line.clone(),
                            result: CmdResult::ok(""),
                            skipped: true,
                            failed: false,
                            changed: false,
                            note: None,
                        });
                        continue;
                    }
                    Err(e) => {
                        let failed_record = TaskRecord {
                            task: task.name.clone(),
                            command: task.line.clone(),
                            result: CmdResult::err(2, format!("when: {e}")),
                            skipped: false,
                            failed: true,
                            changed: false,
                            note: Some(format!("when condition error: {e}")),
                        };
                        records.push(failed_record);
                        if !task.ignore_errors {
                            overall_failed = true;
                            break 'plays;
                        }
                        continue;
                    }
                }
            }

            state.tick(1.0);
            let namespace = state.namespace.clone();
            let result = match task.module {
                TaskModule::Command => shell::run_command_line(&task.line, state, &namespace),
                TaskModule::Shell => shell::run_line(&task.line, state, &namespace),
            };

            if let Some(name) = &task.register {
                vars.insert(
                    name.clone(),
                    TaskVars {
                        stdout: result.stdout.clone(),
                        stderr: result.stderr.clone(),
                        rc: result.rc as i64,
                    },
                );
            }

            let mut failed = match &task.failed_when {
                Some(expr) => match eval_expr(expr, &vars) {
                    Ok(b) => b,
                    Err(e) => {
                        note = Some(format!("failed_when error: {e}"));
                        true
                    }
                },
                None => result.rc != 0,
            };
            let changed = match &task.changed_when {
                Some(expr) => match eval_expr(expr, &vars) {
                    Ok(b) => b,
                    Err(e) => {
                        note = Some(format!("changed_when error: {e}"));
                        failed = true;
                        false
                    }
                },
                None => result.mutated && result.rc == 0,
            };

            for service in &healthy_at_start {
                if let Ok(m) = state.observe(service) {
                    if m.ready_count == 0 {
                        availability_violations += 1;
                    }
                }
            }

            records.push(TaskRecord {
                task: task.name.clone(),
                command: task.line.clone(),
                result,
                skipped: false,
                failed,
                changed,
                note,
            });

            if failed && !task.ignore_errors {
                overall_failed = true;
                break 'plays;
            }
        }
    }

    let status = if overall_failed {
        RunStatus::Failed
    } else {
        RunStatus::Ok
    };
    let summary = summarize(&records, status);
    Ok(Transcript {
        records,
        status,
        summary,
        availability_violations,
    })
}

fn summarize(records: &[TaskRecord], status: RunStatus) -> String {
    let mut parts = Vec::with_capacity(records.len());
    for r in records {
        let part = if r.skipped {
            format!("'{}' skipped", r.task)
        } else if r.failed {
            let why = r
                .note
                .clone()
                .unwrap_or_else(|| truncate(&r.result.stderr, 160));
            format!("'{}' failed (rc={}): {}", r.task, r.result.rc, why)
        } else {
            format!("'{}' ok (rc={})", r.task, r.result.rc)
        };
        parts.push(part);
    }
    let word = match status {
        RunStatus::Ok => "ok",
        RunStatus::Failed => "failed",
    };
    format!("{}: {}", word, parts.join("; "))
}

fn truncate(s: &str, max: usize) -> String {
    if s.len() <= max {
        return s.to_string();
    }
    let mut end = max;
    while end > 0 && !s.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}...", &s[..end])
}
