//! The line-oriented document format shared by every orchestrator input
//! file (config, intent, deployment, topology, scenario).
//!
//! A document is a sequence of `keypath value` lines. The keypath is a
//! dot-separated path of map keys and array indices, so nested structures
//! stay greppable one fact per line:
//!
//! ```text
//! app_id nginx-app
//! conditions.0.metric rtt_ue_to_app_ms
//! conditions.0.op lt
//! conditions.0.threshold 25
//! node_priority.0 master
//! ```
//!
//! Blank lines and lines whose first non-space character is `#` are
//! ignored. Values are inferred as booleans, integers, or floats when they
//! look like one; anything else is a string. Double-quoted strings support
//! the `\"`, `\\` and `\n` escapes and defeat inference. A JSON rendering
//! of the same tree is also accepted: documents whose first non-space
//! character is `{` or `[` are parsed as JSON.
//!
//! Array indices under one parent must form a contiguous `0..n` run. Map
//! keys are restricted to `[A-Za-z0-9_-]+` (and must not be all digits,
//! which would read as an index). The full grammar is documented in
//! `docs/formats.md`.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{Map, Value};
use thiserror::Error;

/// Error raised by document parsing: either the text is malformed
/// (`Syntax`, with a 1-based line number) or it parses but violates the
/// target schema or an invariant (`Validation`).
#[derive(Debug, Error)]
pub enum ParseError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("{message}")]
    Validation { message: String },
}

impl ParseError {
    pub fn validation(message: impl Into<String>) -> Self {
        ParseError::Validation {
            message: message.into(),
        }
    }

    fn syntax(line: usize, message: impl Into<String>) -> Self {
        ParseError::Syntax {
            line,
            message: message.into(),
        }
    }

    /// Line number for syntax errors, if any.
    pub fn line(&self) -> Option<usize> {
        match self {
            ParseError::Syntax { line, .. } => Some(*line),
            ParseError::Validation { .. } => None,
        }
    }
}

/// Parse a document into a JSON value tree, auto-detecting the rendering:
/// keypath lines by default, JSON when the text starts with `{` or `[`.
pub fn parse_document(text: &str) -> Result<Value, ParseError> {
    let first = text.chars().find(|c| !c.is_whitespace());
    match first {
        Some('{') | Some('[') => serde_json::from_str(text).map_err(|e| ParseError::Syntax {
            line: e.line(),
            message: e.to_string(),
        }),
        _ => parse_keypath(text),
    }
}

/// Parse a document straight into a deserializable type. Schema
/// mismatches (unknown fields, wrong types) surface as validation errors.
pub fn from_document<T: DeserializeOwned>(text: &str) -> Result<T, ParseError> {
    let value = parse_document(text)?;
    serde_json::from_value(value).map_err(|e| ParseError::validation(e.to_string()))
}

/// Render a serializable value in the canonical keypath form.
///
/// Empty maps and arrays produce no lines; parsing treats the missing keys
/// as defaults, so values round-trip.
pub fn to_document<T: Serialize>(value: &T) -> String {
    let value = serde_json::to_value(value).expect("document types serialize to JSON");
    let mut out = String::new();
    emit_value(&mut out, "", &value);
    out
}

fn emit_value(out: &mut String, path: &str, value: &Value) {
    match value {
        Value::Object(map) => {
            for (key, v) in map {
                let child = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                emit_value(out, &child, v);
            }
        }
        Value::Array(items) => {
            for (i, v) in items.iter().enumerate() {
                emit_value(out, &format!("{path}.{i}"), v);
            }
        }
        Value::Null => {}
        Value::Bool(b) => {
            out.push_str(path);
            out.push(' ');
            out.push_str(if *b { "true" } else { "false" });
            out.push('\n');
        }
        Value::Number(n) => {
            out.push_str(path);
            out.push(' ');
            out.push_str(&n.to_string());
            out.push('\n');
        }
        Value::String(s) => {
            out.push_str(path);
            out.push(' ');
            if needs_quoting(s) {
                out.push('"');
                for c in s.chars() {
                    match c {
                        '"' => out.push_str("\\\""),
                        '\\' => out.push_str("\\\\"),
                        '\n' => out.push_str("\\n"),
                        c => out.push(c),
                    }
                }
                out.push('"');
            } else {
                out.push_str(s);
            }
            out.push('\n');
        }
    }
}

/// Strings that would be re-inferred as something else (or mangled by
/// trimming) must be written quoted.
fn needs_quoting(s: &str) -> bool {
    s.is_empty()
        || s != s.trim()
        || s.starts_with('"')
        || s.starts_with('#')
        || s.contains('\n')
        || infer_scalar(s).map(|v| !v.is_string()).unwrap_or(false)
}

fn parse_keypath(text: &str) -> Result<Value, ParseError> {
    let mut root = Node::Unset;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, rest) = match line.split_once([' ', '\t']) {
            Some((k, r)) => (k, r.trim()),
            None => {
                return Err(ParseError::syntax(
                    line_no,
                    format!("missing value after key `{line}`"),
                ))
            }
        };
        let segments = parse_keypath_segments(key).map_err(|m| ParseError::syntax(line_no, m))?;
        let value = parse_value(rest).map_err(|m| ParseError::syntax(line_no, m))?;
        root.insert(&segments, value)
            .map_err(|m| ParseError::syntax(line_no, m))?;
    }
    root.finish().map_err(ParseError::validation)
}

#[derive(Debug, Clone, PartialEq)]
enum Segment {
    Key(String),
    Index(usize),
}

impl std::fmt::Display for Segment {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Segment::Key(k) => f.write_str(k),
            Segment::Index(i) => write!(f, "{i}"),
        }
    }
}

fn parse_keypath_segments(key: &str) -> Result<Vec<Segment>, String> {
    let mut segments = Vec::new();
    for part in key.split('.') {
        if part.is_empty() {
            return Err(format!("empty segment in keypath `{key}`"));
        }
        if part.bytes().all(|b| b.is_ascii_digit()) {
            let idx: usize = part
                .parse()
                .map_err(|_| format!("array index `{part}` out of range"))?;
            segments.push(Segment::Index(idx));
        } else if part
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || b == b'_' || b == b'-')
        {
            segments.push(Segment::Key(part.to_string()));
        } else {
            return Err(format!("invalid keypath segment `{part}`"));
        }
    }
    Ok(segments)
}

fn parse_value(text: &str) -> Result<Value, String> {
    if let Some(rest) = text.strip_prefix('"') {
        let mut out = String::new();
        let mut chars = rest.chars();
        loop {
            match chars.next() {
                Some('"') => break,
                Some('\\') => match chars.next() {
                    Some('"') => out.push('"'),
                    Some('\\') => out.push('\\'),
                    Some('n') => out.push('\n'),
                    Some(c) => return Err(format!("unsupported escape `\\{c}`")),
                    None => return Err("unterminated string value".to_string()),
                },
                Some(c) => out.push(c),
                None => return Err("unterminated string value".to_string()),
            }
        }
        if chars.next().is_some() {
            return Err("unexpected characters after closing quote".to_string());
        }
        return Ok(Value::String(out));
    }
    infer_scalar(text).ok_or_else(|| format!("cannot parse value `{text}`"))
}

/// Unquoted value inference: bool, then integer, then float, else string.
fn infer_scalar(text: &str) -> Option<Value> {
    match text {
        "true" => return Some(Value::Bool(true)),
        "false" => return Some(Value::Bool(false)),
        _ => {}
    }
    if looks_like_int(text) {
        if let Ok(i) = text.parse::<i64>() {
            return Some(Value::Number(i.into()));
        }
        if let Ok(u) = text.parse::<u64>() {
            return Some(Value::Number(u.into()));
        }
    }
    if looks_like_float(text) {
        if let Ok(f) = text.parse::<f64>() {
            return serde_json::Number::from_f64(f).map(Value::Number);
        }
    }
    Some(Value::String(text.to_string()))
}

fn looks_like_int(text: &str) -> bool {
    let digits = text.strip_prefix(['+', '-']).unwrap_or(text);
    !digits.is_empty() && digits.bytes().all(|b| b.is_ascii_digit())
}

fn looks_like_float(text: &str) -> bool {
    let body = text.strip_prefix(['+', '-']).unwrap_or(text);
    if body.is_empty() {
        return false;
    }
    let (mantissa, exponent) = match body.split_once(['e', 'E']) {
        Some((m, e)) => (m, Some(e)),
        None => (body, None),
    };
    let mut parts = mantissa.splitn(2, '.');
    let int_part = parts.next().unwrap_or("");
    let frac_part = parts.next();
    let int_ok = int_part.bytes().all(|b| b.is_ascii_digit());
    let frac_ok = frac_part.is_none_or(|f| f.bytes().all(|b| b.is_ascii_digit()));
    if !int_ok || !frac_ok || (int_part.is_empty() && frac_part.is_none_or(str::is_empty)) {
        return false;
    }
    match exponent {
        Some(e) => {
            let e = e.strip_prefix(['+', '-']).unwrap_or(e);
            !e.is_empty() && e.bytes().all(|b| b.is_ascii_digit())
        }
        None => true,
    }
}

/// Intermediate tree: arrays keep a sparse index map until `finish`
/// checks contiguity.
enum Node {
    Unset,
    Leaf(Value),
    Map(indexmap::IndexMap<String, Node>),
    Arr(std::collections::BTreeMap<usize, Node>),
}

impl Node {
    fn insert(&mut self, path: &[Segment], value: Value) -> Result<(), String> {
        match path.split_first() {
            None => match self {
                Node::Unset => {
                    *self = Node::Leaf(value);
                    Ok(())
                }
                _ => Err("duplicate key".to_string()),
            },
            Some((seg, rest)) => {
                match (&mut *self, seg) {
                    (Node::Unset, Segment::Key(_)) => *self = Node::Map(indexmap::IndexMap::new()),
                    (Node::Unset, Segment::Index(_)) => {
                        *self = Node::Arr(std::collections::BTreeMap::new())
                    }
                    (Node::Map(_), Segment::Key(_)) => {}
                    (Node::Arr(_), Segment::Index(_)) => {}
                    (Node::Leaf(_), _) => {
                        return Err(format!("key `{seg}` conflicts with an earlier scalar"))
                    }
                    (Node::Map(_), Segment::Index(_)) => {
                        return Err(format!("index `{seg}` conflicts with earlier map keys"))
                    }
                    (Node::Arr(_), Segment::Key(_)) => {
                        return Err(format!("key `{seg}` conflicts with earlier array indices"))
                    }
                }
                match (self, seg) {
                    (Node::Map(map), Segment::Key(k)) => map
                        .entry(k.clone())
                        .or_insert(Node::Unset)
                        .insert(rest, value),
                    (Node::Arr(arr), Segment::Index(i)) => {
                        arr.entry(*i).or_insert(Node::Unset).insert(rest, value)
                    }
                    _ => unreachable!(),
                }
            }
        }
    }

    fn finish(self) -> Result<Value, String> {
        match self {
            Node::Unset => Ok(Value::Object(Map::new())),
            Node::Leaf(v) => Ok(v),
            Node::Map(map) => {
                let mut out = Map::new();
                for (k, node) in map {
                    out.insert(k, node.finish()?);
                }
                Ok(Value::Object(out))
            }
            Node::Arr(arr) => {
                let mut out = Vec::with_capacity(arr.len());
                for (expected, (idx, node)) in arr.into_iter().enumerate() {
                    if idx != expected {
                        return Err(format!(
                            "array indices must be contiguous from 0, missing index {expected}"
                        ));
                    }
                    out.push(node.finish()?);
                }
                Ok(Value::Array(out))
            }
        }
    }
}
