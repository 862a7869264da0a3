//! Parser for the text exposition format served by node metrics endpoints.
//!
//! Covered subset: sample lines, `#` comment lines (including `# HELP` and
//! `# TYPE`), and blank lines. Label values support the `\"`, `\\` and
//! `\n` escapes. Histogram and summary series parse as the plain samples
//! they expand to. The parser is strict: the first malformed line aborts
//! with its line number rather than being skipped.

use std::fmt;

use indexmap::IndexMap;
use serde::ser::SerializeMap;
use serde::{Serialize, Serializer};
use thiserror::Error;

/// A sample's value. Non-finite values are legal in the format and kept
/// distinct from finite ones rather than smuggled through an `f64`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SampleValue {
    Finite(f64),
    PosInf,
    NegInf,
    Nan,
}

impl SampleValue {
    pub fn from_f64(v: f64) -> Self {
        if v.is_nan() {
            SampleValue::Nan
        } else if v == f64::INFINITY {
            SampleValue::PosInf
        } else if v == f64::NEG_INFINITY {
            SampleValue::NegInf
        } else {
            SampleValue::Finite(v)
        }
    }

    pub fn as_f64(&self) -> f64 {
        match self {
            SampleValue::Finite(v) => *v,
            SampleValue::PosInf => f64::INFINITY,
            SampleValue::NegInf => f64::NEG_INFINITY,
            SampleValue::Nan => f64::NAN,
        }
    }

    pub fn finite(&self) -> Option<f64> {
        match self {
            SampleValue::Finite(v) => Some(*v),
            _ => None,
        }
    }
}

impl fmt::Display for SampleValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SampleValue::Finite(v) => write!(f, "{v}"),
            SampleValue::PosInf => f.write_str("+Inf"),
            SampleValue::NegInf => f.write_str("-Inf"),
            SampleValue::Nan => f.write_str("NaN"),
        }
    }
}

// JSON has no Inf/NaN literals; specials serialize as their exposition
// strings.
impl Serialize for SampleValue {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            SampleValue::Finite(v) => serializer.serialize_f64(*v),
            special => serializer.serialize_str(&special.to_string()),
        }
    }
}

/// One scraped sample line: `name{labels} value [timestamp_ms]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricSample {
    pub name: String,
    #[serde(serialize_with = "ordered_labels")]
    pub labels: IndexMap<String, String>,
    pub value: SampleValue,
    pub timestamp: Option<i64>,
}

fn ordered_labels<S: Serializer>(
    labels: &IndexMap<String, String>,
    serializer: S,
) -> Result<S::Ok, S::Error> {
    let mut map = serializer.serialize_map(Some(labels.len()))?;
    for (k, v) in labels {
        map.serialize_entry(k, v)?;
    }
    map.end()
}

impl MetricSample {
    /// Render the sample back in exposition form.
    pub fn to_exposition_line(&self) -> String {
        let mut out = self.name.clone();
        if !self.labels.is_empty() {
            out.push('{');
            for (i, (k, v)) in self.labels.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(k);
                out.push_str("=\"");
                for c in v.chars() {
                    match c {
                        '\\' => out.push_str("\\\\"),
                        '"' => out.push_str("\\\""),
                        '\n' => out.push_str("\\n"),
                        c => out.push(c),
                    }
                }
                out.push('"');
            }
            out.push('}');
        }
        out.push(' ');
        out.push_str(&self.value.to_string());
        if let Some(ts) = self.timestamp {
            out.push(' ');
            out.push_str(&ts.to_string());
        }
        out
    }
}

/// Render samples as an exposition document, one line per sample.
pub fn render_exposition(samples: &[MetricSample]) -> String {
    let mut out = String::new();
    for sample in samples {
        out.push_str(&sample.to_exposition_line());
        out.push('\n');
    }
    out
}

#[derive(Debug, Error, PartialEq)]
#[error("line {line}: {message}")]
pub struct ExpositionError {
    pub line: usize,
    pub message: String,
}

/// Parse an exposition document. Returns samples in input order; comments
/// and blank lines attach no samples.
pub fn parse_exposition(input: &[u8]) -> Result<Vec<MetricSample>, ExpositionError> {
    let text = std::str::from_utf8(input).map_err(|e| {
        let line = input[..e.valid_up_to()]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1;
        ExpositionError {
            line,
            message: "input is not valid UTF-8".to_string(),
        }
    })?;
    let mut samples = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let trimmed = line.trim_start();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        samples.push(
            parse_sample_line(line).map_err(|message| ExpositionError {
                line: line_no,
                message,
            })?,
        );
    }
    Ok(samples)
}

struct Cursor<'a> {
    rest: &'a str,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start_matches([' ', '\t']);
    }

    fn peek(&self) -> Option<char> {
        self.rest.chars().next()
    }

    fn bump(&mut self) -> Option<char> {
        let c = self.rest.chars().next()?;
        self.rest = &self.rest[c.len_utf8()..];
        Some(c)
    }

    fn take_while(&mut self, pred: impl Fn(char) -> bool) -> &'a str {
        let end = self
            .rest
            .char_indices()
            .find(|(_, c)| !pred(*c))
            .map(|(i, _)| i)
            .unwrap_or(self.rest.len());
        let (taken, rest) = self.rest.split_at(end);
        self.rest = rest;
        taken
    }
}

fn is_name_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_' || c == ':'
}

fn is_name_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_' || c == ':'
}

fn is_label_start(c: char) -> bool {
    c.is_ascii_alphabetic() || c == '_'
}

fn is_label_char(c: char) -> bool {
    c.is_ascii_alphanumeric() || c == '_'
}

fn parse_sample_line(line: &str) -> Result<MetricSample, String> {
    let mut cur = Cursor { rest: line };
    cur.skip_ws();

    match cur.peek() {
        Some(c) if is_name_start(c) => {}
        Some(c) => return Err(format!("invalid metric name start `{c}`")),
        None => return Err("empty sample line".to_string()),
    }
    let name = cur.take_while(is_name_char).to_string();

    let mut labels = IndexMap::new();
    if cur.peek() == Some('{') {
        cur.bump();
        loop {
            cur.skip_ws();
            match cur.peek() {
                Some('}') => {
                    cur.bump();
                    break;
                }
                Some(c) if is_label_start(c) => {}
                Some(c) => return Err(format!("invalid label name start `{c}`")),
                None => return Err("unterminated label set".to_string()),
            }
            let label = cur.take_while(is_label_char).to_string();
            cur.skip_ws();
            if cur.bump() != Some('=') {
                return Err(format!("expected `=` after label `{label}`"));
            }
            cur.skip_ws();
            if cur.bump() != Some('"') {
                return Err(format!("expected opening `\"` for label `{label}`"));
            }
            let mut value = String::new();
            loop {
                match cur.bump() {
                    Some('"') => break,
                    Some('\\') => match cur.bump() {
                        Some('"') => value.push('"'),
                        Some('\\') => value.push('\\'),
                        Some('n') => value.push('\n'),
                        Some(c) => return Err(format!("unsupported escape `\\{c}`")),
                        None => return Err("unterminated label value".to_string()),
                    },
                    Some(c) => value.push(c),
                    None => return Err("unterminated label value".to_string()),
                }
            }
            if labels.insert(label.clone(), value).is_some() {
                return Err(format!("duplicate label `{label}`"));
            }
            cur.skip_ws();
            match cur.bump() {
                Some(',') => continue,
                Some('}') => break,
                Some(c) => return Err(format!("expected `,` or `}}` in label set, got `{c}`")),
                None => return Err("unterminated label set".to_string()),
            }
        }
    }

    cur.skip_ws();
    let value_token = cur.take_while(|c| c != ' ' && c != '\t');
    if value_token.is_empty() {
        return Err("missing sample value".to_string());
    }
    let value = value_token
        .parse::<f64>()
        .map(SampleValue::from_f64)
        .map_err(|_| format!("invalid sample value `{value_token}`"))?;

    cur.skip_ws();
    let ts_token = cur.take_while(|c| c != ' ' && c != '\t');
    let timestamp = if ts_token.is_empty() {
        None
    } else {
        Some(
            ts_token
                .parse::<i64>()
                .map_err(|_| format!("invalid timestamp `{ts_token}`"))?,
        )
    };

    cur.skip_ws();
    if !cur.rest.is_empty() {
        return Err(format!("unexpected trailing characters `{}`", cur.rest));
    }

    Ok(MetricSample {
        name,
        labels,
        value,
        timestamp,
    })
}
