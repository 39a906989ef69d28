//! Evaluator for the jsonpath subset kubectl probes use:
//! `{` `.` field (`.` field | `[` index `]`)* `}`.

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
#[error("jsonpath parse error at offset {offset}: {message}")]
pub struct JsonPathError {
    pub offset: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Segment {
    Field(String),
    Index(usize),
}

fn parse(expr: &str) -> Result<Vec<Segment>, JsonPathError> {
    let err = |offset: usize, message: &str| JsonPathError {
        offset,
        message: message.to_string(),
    };
    let bytes = expr.as_bytes();
    if !expr.starts_with('{') {
        return Err(err(0, "expected '{'"));
    }
    if !expr.ends_with('}') {
        return Err(err(expr.len(), "expected '}'"));
    }
    let inner = &expr[1..expr.len() - 1];
    let mut segments = Vec::new();
    let mut i = 0usize;
    let inner_bytes = inner.as_bytes();
    while i < inner_bytes.len() {
        match inner_bytes[i] {
            b'.' => {
                i += 1;
                let start = i;
                while i < inner_bytes.len()
                    && (inner_bytes[i].is_ascii_alphanumeric()
                        || inner_bytes[i] == b'_'
                        || inner_bytes[i] == b'-')
                {
                    i += 1;
                }
                if i == start {
                    return Err(err(i + 1, "expected field name after '.'"));
                }
                segments.push(Segment::Field(inner[start..i].to_string()));
            }
            b'[' => {
                if segments.is_empty() {
                    return Err(err(i + 1, "index must follow a field"));
                }
                i += 1;
                let start = i;
                while i < inner_bytes.len() && inner_bytes[i].is_ascii_digit() {
                    i += 1;
                }
                if i == start || i >= inner_bytes.len() || inner_bytes[i] != b']' {
                    return Err(err(i + 1, "expected numeric index followed by ']'"));
                }
                let index: usize = inner[start..i]
                    .parse()
                    .map_err(|_| err(start + 1, "index out of range"))?;
                segments.push(Segment::Index(index));
                i += 1;
            }
            _ => return Err(err(i + 1, "expected '.' or '['")),
        }
    }
    if segments.is_empty() {
        return Err(err(1, "empty path"));
    }
    let _ = bytes;
    Ok(segments)
}

/// Evaluate `expr` against a JSON document. Scalars render without quotes;
/// a path that resolves nowhere renders as the empty string, mirroring
/// kubectl's forgiving behavior for probe loops.
pub fn jsonpath_eval(expr: &str, object: &Value) -> Result<String, JsonPathError> {
    let segments = parse(expr)?;
    let mut cursor = object;
    for seg in &segments {
        let next = match seg {
            Segment::Field(name) => cursor.get(name.as_str()),
            Segment::Index(i) => cursor.get(i),
        };
        match next {
            Some(v) => cursor = v,
            None => return Ok(String::new()),
        }
    }
    Ok(render(cursor))
}

fn render(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        Value::Bool(b) => b.to_string(),
        Value::Number(n) => n.to_string(),
        other => serde_json::to_string(other).unwrap_or_default(),
    }
}
