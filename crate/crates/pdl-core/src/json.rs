//! JSON text for [`Value`]s.
//!
//! Rendering is canonical so golden tests can compare bytes: `", "` between
//! items, `": "` after keys, object keys in insertion order, integers without
//! a decimal point, floats in shortest round-trip form. Closures cannot be
//! serialized.

use indexmap::IndexMap;

use crate::ast::{Number, Value};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum JsonError {
    #[error("unserializable value")]
    Unserializable,
    #[error("non-finite number cannot be serialized")]
    NonFinite,
    #[error("invalid JSON at offset {offset}: {message}")]
    Parse { offset: usize, message: String },
}

/// Render a value as compact JSON text.
pub fn to_json(value: &Value) -> Result<String, JsonError> {
    let mut out = String::new();
    write_json(value, &mut out)?;
    Ok(out)
}

fn write_json(value: &Value, out: &mut String) -> Result<(), JsonError> {
    match value {
        Value::Null => out.push_str("null"),
        Value::Bool(true) => out.push_str("true"),
        Value::Bool(false) => out.push_str("false"),
        Value::Num(n) => out.push_str(&render_number(*n)?),
        Value::Str(s) => write_json_string(s, out),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_json(item, out)?;
            }
            out.push(']');
        }
        Value::Object(fields) => {
            out.push('{');
            for (i, (key, item)) in fields.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_json_string(key, out);
                out.push_str(": ");
                write_json(item, out)?;
            }
            out.push('}');
        }
        Value::Closure(_) => return Err(JsonError::Unserializable),
    }
    Ok(())
}

/// Integers render without a decimal point; floats keep one (or an exponent)
/// so they re-parse as floats.
pub fn render_number(n: Number) -> Result<String, JsonError> {
    match n {
        Number::Int(i) => Ok(i.to_string()),
        Number::Float(f) => {
            if !f.is_finite() {
                return Err(JsonError::NonFinite);
            }
            Ok(format!("{f:?}"))
        }
    }
}

pub fn write_json_string(s: &str, out: &mut String) {
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\t' => out.push_str("\\t"),
            c if (c as u32) < 0x20 => out.push_str(&format!("\\u{:04x}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
}

/// Parse JSON text into a [`Value`]. Object key order is preserved.
pub fn from_json(text: &str) -> Result<Value, JsonError> {
    let parsed: serde_json::Value = serde_json::from_str(text).map_err(|e| JsonError::Parse {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    Ok(from_serde(&parsed))
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    let mut offset = 0;
    for (i, l) in text.split('\n').enumerate() {
        if i + 1 == line {
            return offset + column.saturating_sub(1);
        }
        offset += l.len() + 1;
    }
    offset
}

pub fn from_serde(v: &serde_json::Value) -> Value {
    match v {
        serde_json::Value::Null => Value::Null,
        serde_json::Value::Bool(b) => Value::Bool(*b),
        serde_json::Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                Value::int(i)
            } else {
                Value::float(n.as_f64().unwrap_or(f64::NAN))
            }
        }
        serde_json::Value::String(s) => Value::Str(s.clone()),
        serde_json::Value::Array(items) => Value::Array(items.iter().map(from_serde).collect()),
        serde_json::Value::Object(fields) => {
            let mut map = IndexMap::new();
            for (k, v) in fields {
                map.insert(k.clone(), from_serde(v));
            }
            Value::Object(map)
        }
    }
}

/// Convert to a `serde_json::Value` (for trace output and the FFI surface).
pub fn to_serde(value: &Value) -> Result<serde_json::Value, JsonError> {
    Ok(match value {
        Value::Null => serde_json::Value::Null,
        Value::Bool(b) => serde_json::Value::Bool(*b),
        Value::Num(Number::Int(i)) => serde_json::Value::from(*i),
        Value::Num(Number::Float(f)) => serde_json::Number::from_f64(*f)
            .map(serde_json::Value::Number)
            .ok_or(JsonError::NonFinite)?,
        Value::Str(s) => serde_json::Value::String(s.clone()),
        Value::Array(items) => {
            serde_json::Value::Array(items.iter().map(to_serde).collect::<Result<_, _>>()?)
        }
        Value::Object(fields) => {
            let mut map = serde_json::Map::new();
            for (k, v) in fields {
                map.insert(k.clone(), to_serde(v)?);
            }
            serde_json::Value::Object(map)
        }
        Value::Closure(_) => return Err(JsonError::Unserializable),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::{Closure, Environment, Program};
    use std::sync::Arc;

    #[test]
    fn canonical_separators() {
        let v = from_json(r#"{"name":"Search","arguments":{"topic":"Henry Hudson"}}"#).unwrap();
        assert_eq!(
            to_json(&v).unwrap(),
            r#"{"name": "Search", "arguments": {"topic": "Henry Hudson"}}"#
        );
    }

    #[test]
    fn key_order_preserved() {
        let v = from_json(r#"{"b":1,"a":2}"#).unwrap();
        assert_eq!(to_json(&v).unwrap(), r#"{"b": 1, "a": 2}"#);
    }

    #[test]
    fn numbers() {
        assert_eq!(to_json(&Value::int(1565)).unwrap(), "1565");
        assert_eq!(to_json(&Value::float(2.0)).unwrap(), "2.0");
        assert_eq!(to_json(&Value::float(2.5)).unwrap(), "2.5");
        assert_eq!(to_json(&Value::float(-0.0)).unwrap(), "-0.0");
        assert!(to_json(&Value::float(f64::INFINITY)).is_err());
    }

    #[test]
    fn string_escapes() {
        assert_eq!(to_json(&Value::str("a\n\"b\"\\")).unwrap(), r#""a\n\"b\"\\""#);
        assert_eq!(to_json(&Value::str("\u{1}")).unwrap(), "\"\\u0001\"");
    }

    #[test]
    fn closure_is_unserializable() {
        let c = Value::Closure(Arc::new(Closure {
            params: Default::default(),
            body: Program::List(vec![]),
            captured: Environment::initial(vec![]),
        }));
        assert_eq!(to_json(&c), Err(JsonError::Unserializable));
        assert_eq!(to_json(&Value::Array(vec![c])), Err(JsonError::Unserializable));
    }

    #[test]
    fn round_trip_mixed() {
        let text = r#"[1, 2.5, null, true, "x", {"k": [1, 2]}]"#;
        let v = from_json(text).unwrap();
        assert_eq!(to_json(&v).unwrap(), text);
    }
}
