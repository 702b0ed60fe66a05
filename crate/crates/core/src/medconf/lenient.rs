//! Tolerant JSON reading for model replies.

use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// The body of the first fenced code block, or the whole text.
fn strip_fences(text: &str) -> &str {
    let Some(open) = text.find("```") else { return text };
    let after = &text[open + 3..];
    let body = after.split_once('\n').map_or(after, |(lang, rest)| {
        if lang.trim().chars().all(|c| c.is_ascii_alphanumeric()) {
            rest
        } else {
            after
        }
    });
    body.find("```").map_or(body, |close| &body[..close])
}

/// From the first `{` or `[` to the last `}` or `]`.
fn outer_span(text: &str) -> &str {
    let start = text.find(['{', '[']);
    let end = text.rfind(['}', ']']);
    match (start, end) {
        (Some(s), Some(e)) if e > s => &text[s..=e],
        _ => text,
    }
}

/// Parses JSON allowing fences, surrounding prose, trailing commas, single
/// quotes and comments. A bare run of objects `{..},{..}` reads as an array.
pub fn parse(text: &str) -> Result<Value> {
    let body = outer_span(strip_fences(text).trim());
    if let Ok(v) = json5::from_str::<Value>(body) {
        return Ok(v);
    }
    json5::from_str::<Value>(&format!("[{body}]"))
        .map_err(|e| Error::parse(format!("not JSON even leniently: {e}")))
}

/// Lowercases object keys and maps spaces and hyphens to underscores, so
/// `"support level"` and `"Support_Level"` read alike.
pub fn canonical_keys(v: Value) -> Value {
    match v {
        Value::Object(map) => Value::Object(
            map.into_iter()
                .map(|(k, v)| (k.trim().to_lowercase().replace([' ', '-'], "_"), canonical_keys(v)))
                .collect::<Map<_, _>>(),
        ),
        Value::Array(xs) => Value::Array(xs.into_iter().map(canonical_keys).collect()),
        other => other,
    }
}

/// An integer id given as a number or a numeric string.
pub fn as_id(v: &Value) -> Option<u32> {
    match v {
        Value::Number(n) => n.as_u64().and_then(|x| u32::try_from(x).ok()),
        Value::String(s) => s.trim().trim_start_matches('#').parse().ok(),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn fences_prose_and_trailing_commas() {
        let v = parse("Here you go:\n```json\n[{'id': 1, \"x\": [1,2,],},]\n```\nThanks").unwrap();
        assert_eq!(v, json!([{"id": 1, "x": [1, 2]}]));
    }

    #[test]
    fn object_runs_become_arrays() {
        let v = parse("{\"id\": 1}, {\"id\": 2}").unwrap();
        assert_eq!(v, json!([{"id": 1}, {"id": 2}]));
        assert!(parse("no json here").is_err());
    }

    #[test]
    fn keys_are_canonicalized() {
        let v = canonical_keys(json!({"Support Level": 1, "a": [{"criteria-evaluation": 2}]}));
        assert_eq!(v, json!({"support_level": 1, "a": [{"criteria_evaluation": 2}]}));
        assert_eq!(as_id(&json!("3")), Some(3));
        assert_eq!(as_id(&json!(-1)), None);
    }
}
