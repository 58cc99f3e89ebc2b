//! Locating the JSON object inside a model reply.

use serde_json::{Map, Value};

/// Parses the first top-level JSON object in `text`, tolerating code fences
/// and prose around it.
pub fn json_object(text: &str) -> Result<Map<String, Value>, String> {
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err("reply is empty".into());
    }
    if let Ok(Value::Object(map)) = serde_json::from_str::<Value>(trimmed) {
        return Ok(map);
    }
    let start = trimmed
        .find('{')
        .ok_or_else(|| format!("no JSON object in reply: {}", snippet(trimmed)))?;
    let mut stream = serde_json::Deserializer::from_str(&trimmed[start..]).into_iter::<Value>();
    match stream.next() {
        Some(Ok(Value::Object(map))) => Ok(map),
        Some(Ok(_)) => Err("reply is not a JSON object".into()),
        Some(Err(e)) => Err(format!("malformed JSON object ({e}): {}", snippet(trimmed))),
        None => Err(format!("no JSON object in reply: {}", snippet(trimmed))),
    }
}

pub fn snippet(text: &str) -> String {
    const MAX: usize = 80;
    let mut out: String = text.chars().take(MAX).collect();
    if text.chars().count() > MAX {
        out.push_str("...");
    }
    out.replace('\n', " ")
}

/// Cuts `text` to at most `max` characters on a char boundary.
pub fn cap_chars(text: &str, max: usize) -> String {
    match text.char_indices().nth(max) {
        Some((i, _)) => text[..i].trim_end().to_string(),
        None => text.to_string(),
    }
}
