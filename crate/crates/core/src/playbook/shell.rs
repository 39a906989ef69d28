//! Mini-shell for `shell:` tasks and probe lines: commands composed with `;`,
//! `&&` and `||`, a `2>/dev/null` redirect, single-quote quoting, and an
//! `echo` builtin. Everything else dispatches to the kubectl interpreter or
//! fails with rc 127.

use serde::{Deserialize, Serialize};

use crate::cluster::ClusterState;
use crate::kubecmd::{self, CmdResult, Token};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Connector {
    First,
    Seq,
    And,
    Or,
}

/// One command of a shell line, with how it chains onto the previous one.
#[derive(Debug, Clone, PartialEq)]
pub struct ShellCmd {
    pub connector: Connector,
    pub argv: Vec<String>,
    pub suppress_stderr: bool,
}

/// Split a shell line into chained commands. Quoting has already been applied;
/// a trailing `2>/dev/null` word becomes the stderr suppression flag.
pub fn parse_line(line: &str) -> Result<Vec<ShellCmd>, kubecmd::CmdError> {
    let tokens = kubecmd::tokenize(line)?;
    let mut cmds = Vec::new();
    let mut connector = Connector::First;
    let mut argv: Vec<String> = Vec::new();
    let mut suppress = false;
    let flush = |cmds: &mut Vec<ShellCmd>,
                 connector: Connector,
                 argv: &mut Vec<String>,
                 suppress: &mut bool|
     -> Result<(), kubecmd::CmdError> {
        if argv.is_empty() {
            return Err(kubecmd::CmdError::Parse {
                offset: cmds.len(),
                message: "empty command in shell sequence".into(),
            });
        }
        cmds.push(ShellCmd {
            connector,
            argv: std::mem::take(argv),
            suppress_stderr: std::mem::take(suppress),
        });
        Ok(())
    };
    for tok in tokens {
        match tok {
            Token::Word(w) => {
                if w == "2>/dev/null" {
                    suppress = true;
                } else {
                    argv.push(w);
                }
            }
            Token::Seq | Token::And | Token::Or => {
                flush(&mut cmds, connector, &mut argv, &mut suppress)?;
                connector = match tok {
                    Token::Seq => Connector::Seq,
                    Token::And => Connector::And,
                    Token::Or => Connector::Or,
                    Token::Word(_) => unreachable!(),
                };
            }
        }
    }
    flush(&mut cmds, connector, &mut argv, &mut suppress)?;
    Ok(cmds)
}

fn run_single(cmd: &ShellCmd, state: &mut ClusterState, namespace: &str) -> CmdResult {
    let mut result = match cmd.argv[0].as_str() {
        "echo" => CmdResult::ok(cmd.argv[1..].join(" ")),
        "kubectl" => {
            // round-trip through the canonical renderer is lossy for raw argv,
            // so reassemble with quoting for any argument carrying whitespace
            let line = cmd
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
            kubecmd::exec_line(&line, state, namespace)
        }
        other => CmdResult::err(127, format!("{other}: command not found")),
    };
    if cmd.suppress_stderr {
        result.stderr.clear();
    }
    result
}

/// `command:`-module semantics: exactly one command, no shell composition.
pub fn run_command_line(line: &str, state: &mut ClusterState, namespace: &str) -> CmdResult {
    match parse_line(line) {
        Ok(cmds) if cmds.len() == 1 => run_single(&cmds[0], state, namespace),
        Ok(_) => CmdResult::err(
            1,
            "shell composition (';', '&&', '||') requires the shell module",
        ),
        Err(e) => CmdResult::err(1, format!("command: {e}")),
    }
}

/// Run a full shell line with short-circuit semantics. Stdout (and stderr) of
/// the executed commands are joined with newlines, skipping empty pieces; rc
/// is the last executed command's.
pub fn run_line(line: &str, state: &mut ClusterState, namespace: &str) -> CmdResult {
    let cmds = match parse_line(line) {
        Ok(c) => c,
        Err(e) => return CmdResult::err(1, format!("shell: {e}")),
    };
    run_parsed(&cmds, state, namespace)
}

pub fn run_parsed(cmds: &[ShellCmd], state: &mut ClusterState, namespace: &str) -> CmdResult {
    let mut stdout_parts: Vec<String> = Vec::new();
    let mut stderr_parts: Vec<String> = Vec::new();
    let mut rc = 0i32;
    let mut mutated = false;
    let mut last_rc: Option<i32> = None;
    for cmd in cmds {
        let skip = match cmd.connector {
            Connector::First | Connector::Seq => false,
            Connector::And => last_rc.map(|c| c != 0).unwrap_or(false),
            Connector::Or => last_rc.map(|c| c == 0).unwrap_or(false),
        };
        if skip {
            continue;
        }
        let result = run_single(cmd, state, namespace);
        if !result.stdout.is_empty() {
            stdout_parts.push(result.stdout);
        }
        if !result.stderr.is_empty() {
            stderr_parts.push(result.stderr);
        }
        mutated |= result.mutated;
        rc = result.rc;
        last_rc = Some(result.rc);
    }
    CmdResult {
        stdout: stdout_parts.join("\n"),
        stderr: stderr_parts.join("\n"),
        rc,
        mutated,
    }
}
