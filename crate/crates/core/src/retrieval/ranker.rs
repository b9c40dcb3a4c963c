//! Parsing the ranking model's JSON reply.
//!
//! The reply should be an object mapping scenario id to `[rationale, score]`.
//! Models wrap it in prose or code fences and vary the value shape, so this
//! accepts:
//!
//! - `["rationale", 90]`, `[90, "rationale"]` and `[90]`
//! - a bare score, `90` or `"90"`
//! - `{"rationale": "...", "score": 90}`
//!
//! Entries whose score cannot be read are dropped.

use std::fmt;

use serde::de::{Deserialize, Deserializer, MapAccess, Visitor};
use serde_json::Value;

use crate::error::RetrievalError;

use super::RankedEntry;

/// Object entries in document order, duplicates included.
struct OrderedObject(Vec<(String, Value)>);

impl<'de> Deserialize<'de> for OrderedObject {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = OrderedObject;
            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a JSON object")
            }
            fn visit_map<A: MapAccess<'de>>(self, mut map: A) -> Result<OrderedObject, A::Error> {
                let mut out = Vec::new();
                while let Some((k, v)) = map.next_entry::<String, Value>()? {
                    out.push((k, v));
                }
                Ok(OrderedObject(out))
            }
        }
        d.deserialize_map(V)
    }
}

fn object_at(text: &str) -> Option<Vec<(String, Value)>> {
    let mut stream = serde_json::Deserializer::from_str(text).into_iter::<OrderedObject>();
    match stream.next() {
        Some(Ok(obj)) => Some(obj.0),
        _ => None,
    }
}

/// The first JSON object found in `text`: the whole reply, then the inside of
/// any code fence, then a scan from each `{`.
pub(crate) fn extract_object(text: &str) -> Option<Vec<(String, Value)>> {
    let trimmed = text.trim();
    if trimmed.starts_with('{') {
        if let Some(obj) = object_at(trimmed) {
            return Some(obj);
        }
    }
    let mut rest = text;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map_or(0, |i| i + 1);
        let Some(close) = after[body_start..].find("```") else {
            break;
        };
        let body = after[body_start..body_start + close].trim();
        if body.starts_with('{') {
            if let Some(obj) = object_at(body) {
                return Some(obj);
            }
        }
        rest = &after[body_start + close + 3..];
    }
    text.match_indices('{')
        .find_map(|(i, _)| object_at(&text[i..]))
}

fn number(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().trim_end_matches('%').trim().parse::<f64>().ok(),
        _ => None,
    }
    .filter(|x| x.is_finite())
}

fn score_and_rationale(v: &Value) -> Option<(f64, String)> {
    match v {
        Value::Array(items) => {
            let score = items.iter().rev().find_map(number)?;
            let rationale = items
                .iter()
                .find_map(|x| match x {
                    Value::String(s) if number(x).is_none() => Some(s.clone()),
                    _ => None,
                })
                .unwrap_or_default();
            Some((score, rationale))
        }
        Value::Object(map) => {
            let score = map.get("score").and_then(number)?;
            let rationale = map
                .get("rationale")
                .or_else(|| map.get("justification"))
                .and_then(Value::as_str)
                .unwrap_or_default()
                .to_string();
            Some((score, rationale))
        }
        other => number(other).map(|s| (s, String::new())),
    }
}

/// Parses a ranking over `valid_ids`, which are given in pool order.
///
/// Unknown ids are dropped, the first occurrence of a repeated id wins, scores
/// are clamped to `[0, 100]`, and the result is ordered by score with ties in
/// pool order, then cut to `k`.
pub fn parse_ranker_response(
    text: &str,
    valid_ids: &[&str],
    k: usize,
) -> Result<Vec<RankedEntry>, RetrievalError> {
    let object = extract_object(text).ok_or(RetrievalError::MalformedRankerOutput)?;
    let mut picked: Vec<(usize, RankedEntry)> = Vec::new();
    for (key, value) in object {
        let key = key.trim();
        let Some(pos) = valid_ids.iter().position(|id| *id == key) else {
            continue;
        };
        if picked.iter().any(|(p, _)| *p == pos) {
            continue;
        }
        let Some((score, rationale)) = score_and_rationale(&value) else {
            continue;
        };
        picked.push((
            pos,
            RankedEntry {
                scenario_id: key.to_string(),
                score: score.clamp(0.0, 100.0),
                rationale,
            },
        ));
    }
    picked.sort_by(|(pa, a), (pb, b)| b.score.total_cmp(&a.score).then(pa.cmp(pb)));
    Ok(picked.into_iter().take(k).map(|(_, e)| e).collect())
}
