//! Tolerant reader for rater responses.
//!
//! Accepted shapes, tried in order:
//!
//! 1. A JSON value, either inside a fenced block or as the outermost `{...}`
//!    span: `{"ratings": [{"task_id", "E0".."E3", "justification"}]}`, a bare
//!    array of such objects, or an object keyed by task id.
//! 2. Line-oriented text, where a line naming a task id opens that task and
//!    `E0: 0.4`-style pairs (decimals or percentages) fill its levels. A line
//!    starting `Justification:` attaches text to the open task.
//!
//! Levels omitted for a task that has at least one level are read as zero.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde_json::Value;
use thiserror::Error;

use crate::corpus::{DistributionFault, ExposureDistribution};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ResponseError {
    #[error("response has no distribution for task {0}")]
    MissingTask(String),
    #[error("unreadable value {text:?} at bytes {}..{}", span.0, span.1)]
    ParseError { span: (usize, usize), text: String },
    #[error("task {task_id}: {fault}")]
    InvalidDistribution { task_id: String, fault: DistributionFault },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParsedResponse {
    pub distributions: BTreeMap<String, ExposureDistribution>,
    pub justifications: BTreeMap<String, String>,
}

#[derive(Debug, Default, Clone)]
struct Partial {
    levels: [Option<f64>; 4],
    justification: String,
}

static FENCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?s)```(?:json|JSON)?\s*\n(.*?)```").expect("valid regex"));
static LEVEL: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:p_)?E([0-3])\b\s*[:=]\s*([^\s,;|)]+)").expect("valid regex"));
static JUSTIFICATION: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)^\W*justification\W*[:\-]\s*(.*)$").expect("valid regex"));

fn number(text: &str) -> Option<f64> {
    let t = text.trim().trim_end_matches(['.', '*']);
    if let Some(pct) = t.strip_suffix('%') {
        return pct.trim().parse::<f64>().ok().map(|v| v / 100.0);
    }
    t.parse::<f64>().ok()
}

fn json_level(v: &Value) -> Option<Option<f64>> {
    match v {
        Value::Number(n) => Some(n.as_f64()),
        Value::String(s) => Some(number(s)),
        _ => None,
    }
}

fn level_key(key: &str) -> Option<usize> {
    let k = key.trim().to_ascii_lowercase();
    let k = k.strip_prefix("p_").unwrap_or(&k);
    match k {
        "e0" => Some(0),
        "e1" => Some(1),
        "e2" => Some(2),
        "e3" => Some(3),
        _ => None,
    }
}

fn partial_from_object(obj: &serde_json::Map<String, Value>, span: (usize, usize)) -> Result<Partial, ResponseError> {
    let mut p = Partial::default();
    let levels = obj.get("probabilities").and_then(Value::as_object).unwrap_or(obj);
    for (k, v) in levels {
        if let Some(i) = level_key(k) {
            match json_level(v) {
                Some(Some(x)) => p.levels[i] = Some(x),
                _ => return Err(ResponseError::ParseError { span, text: v.to_string() }),
            }
        }
    }
    if let Some(j) = obj.get("justification").and_then(Value::as_str) {
        p.justification = j.trim().to_string();
    }
    Ok(p)
}

fn from_json(value: &Value, span: (usize, usize)) -> Result<BTreeMap<String, Partial>, ResponseError> {
    let mut out = BTreeMap::new();
    let list = match value {
        Value::Object(o) => o.get("ratings").or_else(|| o.get("tasks")).and_then(Value::as_array),
        Value::Array(a) => Some(a),
        _ => None,
    };
    if let Some(items) = list {
        for item in items {
            if let Some(obj) = item.as_object() {
                if let Some(id) = obj.get("task_id").or_else(|| obj.get("id")).and_then(Value::as_str) {
                    out.insert(id.trim().to_string(), partial_from_object(obj, span)?);
                }
            }
        }
    } else if let Value::Object(o) = value {
        for (id, v) in o {
            if let Some(obj) = v.as_object() {
                out.insert(id.trim().to_string(), partial_from_object(obj, span)?);
            }
        }
    }
    Ok(out)
}

fn json_candidates(raw: &str) -> Vec<(usize, usize)> {
    let mut spans: Vec<(usize, usize)> =
        FENCE.captures_iter(raw).filter_map(|c| c.get(1)).map(|m| (m.start(), m.end())).collect();
    if let (Some(a), Some(b)) = (raw.find('{'), raw.rfind('}')) {
        if a < b {
            spans.push((a, b + 1));
        }
    }
    if let (Some(a), Some(b)) = (raw.find('['), raw.rfind(']')) {
        if a < b {
            spans.push((a, b + 1));
        }
    }
    spans
}

fn from_lines(raw: &str, expected: &[String]) -> Result<BTreeMap<String, Partial>, ResponseError> {
    let mut ids: Vec<&String> = expected.iter().collect();
    ids.sort_by_key(|s| std::cmp::Reverse(s.len()));
    let alternation = ids.iter().map(|s| regex::escape(s)).collect::<Vec<_>>().join("|");
    let id_re = Regex::new(&format!(r"(?:^|[^A-Za-z0-9_])({alternation})(?:$|[^A-Za-z0-9_])")).expect("escaped ids");
    let mut out: BTreeMap<String, Partial> = BTreeMap::new();
    let mut current: Option<String> = None;
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        let text = line.trim_end_matches(['\n', '\r']);
        if let Some(c) = JUSTIFICATION.captures(text) {
            if let Some(id) = &current {
                out.entry(id.clone()).or_default().justification = c[1].trim().to_string();
            }
            continue;
        }
        if !expected.is_empty() {
            if let Some(c) = id_re.captures(text) {
                current = Some(c[1].to_string());
            }
        }
        for c in LEVEL.captures_iter(text) {
            let Some(id) = current.clone() else { continue };
            let m = c.get(2).expect("group");
            let v = number(m.as_str()).ok_or_else(|| ResponseError::ParseError {
                span: (start + m.start(), start + m.end()),
                text: m.as_str().into(),
            })?;
            let level: usize = c[1].parse().expect("digit");
            out.entry(id).or_default().levels[level] = Some(v);
        }
    }
    Ok(out)
}

/// Extracts one distribution per expected task id.
pub fn parse_response(raw: &str, expected: &[String]) -> Result<ParsedResponse, ResponseError> {
    let mut found: BTreeMap<String, Partial> = BTreeMap::new();
    for (a, b) in json_candidates(raw) {
        if let Ok(v) = serde_json::from_str::<Value>(&raw[a..b]) {
            let parsed = from_json(&v, (a, b))?;
            if expected.iter().any(|id| parsed.contains_key(id)) {
                found = parsed;
                break;
            }
        }
    }
    if found.is_empty() {
        found = from_lines(raw, expected)?;
    }
    let mut out = ParsedResponse::default();
    for id in expected {
        let p = found.get(id).filter(|p| p.levels.iter().any(Option::is_some));
        let Some(p) = p else { return Err(ResponseError::MissingTask(id.clone())) };
        let probs = p.levels.map(|v| v.unwrap_or(0.0));
        let dist = ExposureDistribution::new(probs)
            .map_err(|fault| ResponseError::InvalidDistribution { task_id: id.clone(), fault })?;
        out.distributions.insert(id.clone(), dist);
        out.justifications.insert(id.clone(), p.justification.clone());
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn line_format() {
        let raw = "Category overview.\n\nTask T01: reading forms\nE0: 0.5, E1: 0.3, E2: 0.2, E3: 0.0\nJustification: mostly direct.\n";
        let p = parse_response(raw, &ids(&["T01"])).unwrap();
        assert_eq!(p.distributions["T01"].probs(), [0.5, 0.3, 0.2, 0.0]);
        assert_eq!(p.justifications["T01"], "mostly direct.");
    }

    #[test]
    fn percentages() {
        let raw = "T2 -> E0: 40%; E1: 60%";
        let p = parse_response(raw, &ids(&["T2"])).unwrap();
        assert_eq!(p.distributions["T2"].probs(), [0.4, 0.6, 0.0, 0.0]);
    }

    #[test]
    fn non_numeric_has_span() {
        let raw = "T1\nE0: lots";
        match parse_response(raw, &ids(&["T1"])) {
            Err(ResponseError::ParseError { span, text }) => {
                assert_eq!(text, "lots");
                assert_eq!(&raw[span.0..span.1], "lots");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn json_keyed_by_task() {
        let raw = r#"{"A": {"E0": 0.1, "E1": 0.9}, "B": {"e0": "1.0"}}"#;
        let p = parse_response(raw, &ids(&["A", "B"])).unwrap();
        assert_eq!(p.distributions["B"].probs(), [1.0, 0.0, 0.0, 0.0]);
    }
}
