//! Condition expressions for `when` / `failed_when` / `changed_when`:
//! literals, registered-variable paths with `| int` / `| float` filters,
//! the six comparison operators, and the `in` substring test.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ResultField {
    Stdout,
    Stderr,
    Rc,
}

impl fmt::Display for ResultField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            ResultField::Stdout => "stdout",
            ResultField::Stderr => "stderr",
            ResultField::Rc => "rc",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Filter {
    Int,
    Float,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Operand {
    Int(i64),
    Float(f64),
    Str(String),
    Path {
        var: String,
        field: ResultField,
        filter: Option<Filter>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    Lt,
    Le,
    Gt,
    Ge,
    Eq,
    Ne,
}

impl fmt::Display for CmpOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CmpOp::Lt => "<",
            CmpOp::Le => "<=",
            CmpOp::Gt => ">",
            CmpOp::Ge => ">=",
            CmpOp::Eq => "==",
            CmpOp::Ne => "!=",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Expr {
    Cmp {
        lhs: Operand,
        op: CmpOp,
        rhs: Operand,
    },
    /// `'needle' in var.field`
    In { needle: String, haystack: Operand },
}

/// The values a registered variable exposes to expressions.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TaskVars {
    pub stdout: String,
    pub stderr: String,
    pub rc: i64,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ExprParseError {
    #[error("expression parse error: {0}")]
    Syntax(String),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("undefined variable {0:?}")]
    UndefinedVar(String),
    #[error("cannot coerce {value:?} with | {filter}")]
    Coercion { value: String, filter: &'static str },
    #[error("type mismatch: {0}")]
    TypeMismatch(String),
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Int(i64),
    Float(f64),
    Str(String),
    Dot,
    Pipe,
    Op(CmpOp),
    In,
}

fn lex(text: &str) -> Result<Vec<Tok>, ExprParseError> {
    let err = |m: String| ExprParseError::Syntax(m);
    let mut toks = Vec::new();
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        match c {
            ' ' | '\t' => i += 1,
            '\'' => {
                let start = i + 1;
                let mut j = start;
                while j < bytes.len() && bytes[j] != b'\'' {
                    j += 1;
                }
                if j >= bytes.len() {
                    return Err(err("unterminated string literal".into()));
                }
                toks.push(Tok::Str(text[start..j].to_string()));
                i = j + 1;
            }
            '.' => {
                toks.push(Tok::Dot);
                i += 1;
            }
            '|' => {
                toks.push(Tok::Pipe);
                i += 1;
            }
            '<' | '>' | '=' | '!' => {
                let two = &text[i..(i + 2).min(text.len())];
                let (op, len) = match two {
                    "<=" => (CmpOp::Le, 2),
                    ">=" => (CmpOp::Ge, 2),
                    "==" => (CmpOp::Eq, 2),
                    "!=" => (CmpOp::Ne, 2),
                    _ => match c {
                        '<' => (CmpOp::Lt, 1),
                        '>' => (CmpOp::Gt, 1),
                        _ => return Err(err(format!("unexpected {c:?}"))),
                    },
                };
                toks.push(Tok::Op(op));
                i += len;
            }
            c if c.is_ascii_digit() || c == '-' => {
                let start = i;
                i += 1;
                let mut is_float = false;
                while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
                    if bytes[i] == b'.' {
                        is_float = true;
                    }
                    i += 1;
                }
                let lit = &text[start..i];
                if is_float {
                    toks.push(Tok::Float(
                        lit.parse()
                            .map_err(|_| err(format!("bad float literal {lit:?}")))?,
                    ));
                } else {
                    toks.push(Tok::Int(
                        lit.parse()
                            .map_err(|_| err(format!("bad int literal {lit:?}")))?,
                    ));
                }
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_')
                {
                    i += 1;
                }
                let word = &text[start..i];
                if word == "in" {
                    toks.push(Tok::In);
                } else {
                    toks.push(Tok::Ident(word.to_string()));
                }
            }
            other => return Err(err(format!("unexpected {other:?}"))),
        }
    }
    Ok(toks)
}

pub fn parse_expr(text: &str) -> Result<Expr, ExprParseError> {
    let toks = lex(text)?;
    let mut pos = 0usize;
    let expr = parse_toplevel(&toks, &mut pos)?;
    if pos != toks.len() {
        return Err(ExprParseError::Syntax(format!(
            "trailing tokens after expression in {text:?}"
        )));
    }
    Ok(expr)
}

fn parse_toplevel(toks: &[Tok], pos: &mut usize) -> Result<Expr, ExprParseError> {
    // string 'in' path is the only non-comparison form
    if let (Some(Tok::Str(s)), Some(Tok::In)) = (toks.get(*pos), toks.get(*pos + 1)) {
        let needle = s.clone();
        *pos += 2;
        let haystack = parse_operand(toks, pos)?;
        if !matches!(haystack, Operand::Path { .. }) {
            return Err(ExprParseError::Syntax(
                "'in' needs a variable path on the right".into(),
            ));
        }
        return Ok(Expr::In { needle, haystack });
    }
    let lhs = parse_operand(toks, pos)?;
    let op = match toks.get(*pos) {
        Some(Tok::Op(op)) => *op,
        other => {
            return Err(ExprParseError::Syntax(format!(
                "expected comparison operator, found {other:?}"
            )))
        }
    };
    *pos += 1;
    let rhs = parse_operand(toks, pos)?;
    Ok(Expr::Cmp { lhs, op, rhs })
}

fn parse_operand(toks: &[Tok], pos: &mut usize) -> Result<Operand, ExprParseError> {
    let err = |m: String| ExprParseError::Syntax(m);
    let operand = match toks.get(*pos) {
        Some(Tok::Int(v)) => {
            *pos += 1;
            Operand::Int(*v)
        }
        Some(Tok::Float(v)) => {
            *pos += 1;
            Operand::Float(*v)
        }
        Some(Tok::Str(s)) => {
            *pos += 1;
            Operand::Str(s.clone())
        }
        Some(Tok::Ident(var)) => {
            let var = var.clone();
            *pos += 1;
            if toks.get(*pos) != Some(&Tok::Dot) {
                return Err(err(format!("expected '.' after variable {var:?}")));
            }
            *pos += 1;
            let field = match toks.get(*pos) {
                Some(Tok::Ident(f)) => match f.as_str() {
                    "stdout" => ResultField::Stdout,
                    "stderr" => ResultField::Stderr,
                    "rc" => ResultField::Rc,
                    other => {
                        return Err(err(format!(
                            "unknown result field {other:?} (expected stdout, stderr or rc)"
                        )))
                    }
                },
                other => return Err(err(format!("expected result field, found {other:?}"))),
            };
            *pos += 1;
            let mut filter = None;
            if toks.get(*pos) == Some(&Tok::Pipe) {
                *pos += 1;
                filter = match toks.get(*pos) {
                    Some(Tok::Ident(f)) if f == "int" => Some(Filter::Int),
                    Some(Tok::Ident(f)) if f == "float" => Some(Filter::Float),
                    other => return Err(err(format!("unknown filter {other:?}"))),
                };
                *pos += 1;
            }
            Operand::Path { var, field, filter }
        }
        other => return Err(err(format!("expected operand, found {other:?}"))),
    };
    Ok(operand)
}

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Int(i64),
    Float(f64),
    Str(String),
}

fn leading_number(s: &str) -> Option<&str> {
    let t = s.trim_start();
    let mut end = 0;
    let bytes = t.as_bytes();
    if end < bytes.len() && (bytes[end] == b'-' || bytes[end] == b'+') {
        end += 1;
    }
    let digits_start = end;
    while end < bytes.len() && bytes[end].is_ascii_digit() {
        end += 1;
    }
    if end < bytes.len() && bytes[end] == b'.' {
        end += 1;
        while end < bytes.len() && bytes[end].is_ascii_digit() {
            end += 1;
        }
    }
    if end == digits_start {
        None
    } else {
        Some(&t[..end])
    }
}

fn resolve(operand: &Operand, vars: &HashMap<String, TaskVars>) -> Result<Value, EvalError> {
    match operand {
        Operand::Int(v) => Ok(Value::Int(*v)),
        Operand::Float(v) => Ok(Value::Float(*v)),
        Operand::Str(s) => Ok(Value::Str(s.clone())),
        Operand::Path { var, field, filter } => {
            let task = vars
                .get(var)
                .ok_or_else(|| EvalError::UndefinedVar(var.clone()))?;
            let raw = match field {
                ResultField::Stdout => Value::Str(task.stdout.clone()),
                ResultField::Stderr => Value::Str(task.stderr.clone()),
                ResultField::Rc => Value::Int(task.rc),
            };
            match filter {
                None => Ok(raw),
                Some(Filter::Int) => match raw {
                    Value::Int(v) => Ok(Value::Int(v)),
                    Value::Float(v) => Ok(Value::Int(v as i64)),
                    Value::Str(s) => {
                        let lead = leading_number(&s).ok_or(EvalError::Coercion {
                            value: s.clone(),
                            filter: "int",
                        })?;
                        let truncated = lead.split('.').next().unwrap_or("");
                        truncated
                            .parse()
                            .map(Value::Int)
                            .map_err(|_| EvalError::Coercion {
                                value: s.clone(),
                                filter: "int",
                            })
                    }
                },
                Some(Filter::Float) => match raw {
                    Value::Int(v) => Ok(Value::Float(v as f64)),
                    Value::Float(v) => Ok(Value::Float(v)),
                    Value::Str(s) => {
                        let lead = leading_number(&s).ok_or(EvalError::Coercion {
                            value: s.clone(),
                            filter: "float",
                        })?;
                        lead.parse()
                            .map(Value::Float)
                            .map_err(|_| EvalError::Coercion {
                                value: s.clone(),
                                filter: "float",
                            })
                    }
                },
            }
        }
    }
}

/// Evaluate an expression over the registered variables. Total over defined
/// variables: every well-typed expression yields a boolean.
pub fn eval_expr(expr: &Expr, vars: &HashMap<String, TaskVars>) -> Result<bool, EvalError> {
    match expr {
        Expr::In { needle, haystack } => match resolve(haystack, vars)? {
            Value::Str(s) => Ok(s.contains(needle.as_str())),
            other => Err(EvalError::TypeMismatch(format!(
                "'in' needs a string on the right, found {other:?}"
            ))),
        },
        Expr::Cmp { lhs, op, rhs } => {
            let l = resolve(lhs, vars)?;
            let r = resolve(rhs, vars)?;
            compare(&l, *op, &r)
        }
    }
}

fn compare(l: &Value, op: CmpOp, r: &Value) -> Result<bool, EvalError> {
    use Value::*;
    match (l, r) {
        (Str(a), Str(b)) => match op {
            CmpOp::Eq => Ok(a == b),
            CmpOp::Ne => Ok(a != b),
            other => Err(EvalError::TypeMismatch(format!(
                "string comparison only supports == and !=, got {other}"
            ))),
        },
        (Int(a), Int(b)) => Ok(cmp_ord(a.cmp(b), op)),
        (Int(_) | Float(_), Int(_) | Float(_)) => {
            let a = as_f64(l);
            let b = as_f64(r);
            Ok(match op {
                CmpOp::Lt => a < b,
                CmpOp::Le => a <= b,
                CmpOp::Gt => a > b,
                CmpOp::Ge => a >= b,
                CmpOp::Eq => a == b,
                CmpOp::Ne => a != b,
            })
        }
        (a, b) => Err(EvalError::TypeMismatch(format!(
            "cannot compare {a:?} with {b:?}"
        ))),
    }
}

fn as_f64(v: &Value) -> f64 {
    match v {
        Value::Int(i) => *i as f64,
        Value::Float(f) => *f,
        Value::Str(_) => unreachable!("string handled before numeric coercion"),
    }
}

fn cmp_ord(ord: std::cmp::Ordering, op: CmpOp) -> bool {
    use std::cmp::Ordering::*;
    match op {
        CmpOp::Lt => ord == Less,
        CmpOp::Le => ord != Greater,
        CmpOp::Gt => ord == Greater,
        CmpOp::Ge => ord != Less,
        CmpOp::Eq => ord == Equal,
        CmpOp::Ne => ord != Equal,
    }
}
