//! Parsing of model responses into binary RU assignment rows.
//!
//! The expected object is
//! `{"agent_id": <int>, "assigned_rus": [<int in 1..=R>, ...], "reasoning": "<text>"}`.
//! It may be wrapped in prose or code fences; the first balanced `{...}`
//! that is valid JSON is used.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::allocation::FeedbackStatus;

/// Schema-true intent object. `agent_id` and RU numbers are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntentObject {
    pub agent_id: u64,
    pub assigned_rus: Vec<u64>,
    pub reasoning: String,
}

impl IntentObject {
    pub fn from_row(agent: usize, row: &[bool], reasoning: impl Into<String>) -> Self {
        Self {
            agent_id: agent as u64 + 1,
            assigned_rus: row
                .iter()
                .enumerate()
                .filter(|(_, &b)| b)
                .map(|(l, _)| l as u64 + 1)
                .collect(),
            reasoning: reasoning.into(),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("intent object serializes")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParsedIntent {
    /// All-zero on failure.
    pub row: Vec<bool>,
    pub status: FeedbackStatus,
    pub reasoning: Option<String>,
}

impl ParsedIntent {
    fn failure(n_rus: usize, detail: impl Into<String>) -> Self {
        Self {
            row: vec![false; n_rus],
            status: FeedbackStatus::ParseError(detail.into()),
            reasoning: None,
        }
    }
}

/// Parses `raw` for agent `agent` (0-based) with `n_rus` RUs.
pub fn parse_intent(raw: &str, agent: usize, n_rus: usize) -> ParsedIntent {
    let Some(value) = first_json_object(raw) else {
        return ParsedIntent::failure(n_rus, "no JSON object found");
    };
    match intent_row(&value, agent, n_rus) {
        Ok((row, reasoning)) => ParsedIntent {
            row,
            status: FeedbackStatus::ParseSuccess,
            reasoning: Some(reasoning),
        },
        Err(detail) => ParsedIntent::failure(n_rus, detail),
    }
}

fn intent_row(value: &Value, agent: usize, n_rus: usize) -> Result<(Vec<bool>, String), String> {
    let obj = value.as_object().ok_or("intent is not an object")?;
    let id = obj.get("agent_id").ok_or("missing field agent_id")?;
    let id = id.as_u64().ok_or("agent_id is not a non-negative integer")?;
    if id != agent as u64 + 1 {
        return Err(format!("agent_id {id} does not match Agent_{}", agent + 1));
    }
    let rus = obj.get("assigned_rus").ok_or("missing field assigned_rus")?;
    let rus = rus.as_array().ok_or("assigned_rus is not a list")?;
    let reasoning = match obj.get("reasoning") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err("reasoning is not a string".into()),
        None => return Err("missing field reasoning".into()),
    };
    let mut row = vec![false; n_rus];
    for entry in rus {
        let ru = match entry {
            Value::Number(n) if n.is_u64() => n.as_u64().unwrap_or_default(),
            Value::Number(n) if n.is_i64() => return Err(format!("RU out of range: {n}")),
            other => return Err(format!("non-integer RU entry {other}")),
        };
        if ru < 1 || ru > n_rus as u64 {
            return Err(format!("RU out of range: {ru} not in 1..={n_rus}"));
        }
        row[ru as usize - 1] = true;
    }
    Ok((row, reasoning))
}

/// First balanced `{...}` in `text` that parses as a JSON object.
pub fn first_json_object(text: &str) -> Option<Value> {
    let mut from = 0;
    while let Some(rel) = text[from..].find('{') {
        let start = from + rel;
        if let Some(end) = balanced_end(text, start) {
            if let Ok(v @ Value::Object(_)) = serde_json::from_str::<Value>(&text[start..end]) {
                return Some(v);
            }
        }
        from = start + 1;
    }
    None
}

/// Byte index one past the brace closing the object that opens at `start`.
fn balanced_end(text: &str, start: usize) -> Option<usize> {
    let bytes = text.as_bytes();
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escape = false;
    for (offset, &b) in bytes[start..].iter().enumerate() {
        if in_string {
            match (escape, b) {
                (true, _) => escape = false,
                (false, b'\\') => escape = true,
                (false, b'"') => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(start + offset + 1);
                }
            }
            _ => {}
        }
    }
    None
}
