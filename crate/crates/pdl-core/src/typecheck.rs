//! Result parsers (`parser:` keyword) and runtime type checking against
//! [`TypeSpec`]s (`spec:` keyword).

use std::fmt;

use indexmap::IndexMap;

use crate::ast::{Number, ParserKind, TypeSpec, Value};
use crate::diag::{nearest_candidate, DocPath};
use crate::json;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{kind} parser failed: {message}")]
pub struct ParseValueError {
    pub kind: &'static str,
    pub message: String,
    pub offset: Option<usize>,
}

/// Apply a result parser to a block's flat string result.
pub fn apply_parser(kind: &ParserKind, raw: &str) -> Result<Value, ParseValueError> {
    match kind {
        ParserKind::Json => json::from_json(raw).map_err(|e| ParseValueError {
            kind: "json",
            message: e.to_string(),
            offset: match e {
                json::JsonError::Parse { offset, .. } => Some(offset),
                _ => None,
            },
        }),
        ParserKind::Yaml => crate::parser::yaml_to_value(raw).map_err(|message| ParseValueError {
            kind: "yaml",
            message,
            offset: None,
        }),
        ParserKind::Jsonl => {
            let mut items = Vec::new();
            let mut offset = 0;
            for line in raw.split('\n') {
                if !line.trim().is_empty() {
                    let v = json::from_json(line).map_err(|e| ParseValueError {
                        kind: "jsonl",
                        message: e.to_string(),
                        offset: Some(offset),
                    })?;
                    items.push(v);
                }
                offset += line.len() + 1;
            }
            Ok(Value::Array(items))
        }
        ParserKind::Regex { pattern } => {
            let re =
                regex::Regex::new(&format!("^(?:{pattern})$")).map_err(|e| ParseValueError {
                    kind: "regex",
                    message: format!("invalid pattern: {e}"),
                    offset: None,
                })?;
            let caps = re.captures(raw).ok_or_else(|| ParseValueError {
                kind: "regex",
                message: format!("pattern '{pattern}' does not match the full result"),
                offset: None,
            })?;
            let names: Vec<&str> = re.capture_names().flatten().collect();
            if !names.is_empty() {
                let mut obj = IndexMap::new();
                for name in names {
                    let v = caps.name(name).map(|m| Value::str(m.as_str())).unwrap_or(Value::Null);
                    obj.insert(name.to_string(), v);
                }
                Ok(Value::Object(obj))
            } else if caps.len() > 1 {
                let groups = (1..caps.len())
                    .map(|i| caps.get(i).map(|m| Value::str(m.as_str())).unwrap_or(Value::Null))
                    .collect();
                Ok(Value::Array(groups))
            } else {
                Ok(Value::str(caps.get(0).map(|m| m.as_str()).unwrap_or(raw)))
            }
        }
    }
}

/// A value failed its `spec:` check. Carries the data path inside the value,
/// the expected type fragment, and an excerpt of what was found.
#[derive(Debug, Clone, PartialEq)]
pub struct TypeMismatch {
    pub path: DocPath,
    pub expected: String,
    pub found: String,
}

impl fmt::Display for TypeMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "expected {} at {}, found {}", self.expected, self.path, self.found)
    }
}

fn excerpt(v: &Value) -> String {
    let text = crate::expr::stringify(v).unwrap_or_else(|_| "<function>".to_string());
    let mut shown: String = text.chars().take(40).collect();
    if shown.len() < text.len() {
        shown.push('…');
    }
    format!("{} ({})", v.type_name(), shown)
}

/// Structural check of a value against an expanded type.
///
/// `int` accepts integral numbers only; `float` accepts any number; objects
/// require all non-optional fields and permit extras; enums compare by
/// equality. The first mismatch is returned, depth first in field order.
pub fn check_spec(v: &Value, t: &TypeSpec) -> Result<(), TypeMismatch> {
    check_at(v, t, &DocPath::root())
}

fn check_at(v: &Value, t: &TypeSpec, path: &DocPath) -> Result<(), TypeMismatch> {
    let fail = |expected: &str| {
        Err(TypeMismatch { path: path.clone(), expected: expected.to_string(), found: excerpt(v) })
    };
    match t {
        TypeSpec::Str => match v {
            Value::Str(_) => Ok(()),
            _ => fail("str"),
        },
        TypeSpec::Bool => match v {
            Value::Bool(_) => Ok(()),
            _ => fail("bool"),
        },
        TypeSpec::Int => match v {
            Value::Num(Number::Int(_)) => Ok(()),
            Value::Num(Number::Float(f)) if f.is_finite() && f.fract() == 0.0 => Ok(()),
            _ => fail("int"),
        },
        TypeSpec::Float => match v {
            Value::Num(_) => Ok(()),
            _ => fail("float"),
        },
        TypeSpec::Null => match v {
            Value::Null => Ok(()),
            _ => fail("null"),
        },
        TypeSpec::Obj => match v {
            Value::Object(_) => Ok(()),
            _ => fail("obj"),
        },
        TypeSpec::Array(elem) => match v {
            Value::Array(items) => {
                for (i, item) in items.iter().enumerate() {
                    check_at(item, elem, &path.index(i))?;
                }
                Ok(())
            }
            _ => fail("array"),
        },
        TypeSpec::Object(fields) => match v {
            Value::Object(obj) => {
                for (name, field_spec) in fields {
                    let (inner, required) = match field_spec {
                        TypeSpec::Optional(inner) => (inner.as_ref(), false),
                        other => (other, true),
                    };
                    match obj.get(name) {
                        Some(value) => check_at(value, inner, &path.key(name))?,
                        None if required => {
                            return Err(TypeMismatch {
                                path: path.key(name),
                                expected: describe(inner),
                                found: "missing".to_string(),
                            })
                        }
                        None => {}
                    }
                }
                Ok(())
            }
            _ => fail("object"),
        },
        TypeSpec::Enum(options) => {
            if options.iter().any(|o| crate::expr::values_equal(o, v)) {
                Ok(())
            } else {
                let opts = options
                    .iter()
                    .map(|o| crate::expr::stringify(o).unwrap_or_default())
                    .collect::<Vec<_>>();
                fail(&format!("one of [{}]", opts.join(", ")))
            }
        }
        TypeSpec::Optional(inner) => match v {
            Value::Null => Ok(()),
            _ => check_at(v, inner, path),
        },
    }
}

/// Human-readable form of a type, used in mismatch messages.
pub fn describe(t: &TypeSpec) -> String {
    match t {
        TypeSpec::Str => "str".to_string(),
        TypeSpec::Bool => "bool".to_string(),
        TypeSpec::Int => "int".to_string(),
        TypeSpec::Float => "float".to_string(),
        TypeSpec::Null => "null".to_string(),
        TypeSpec::Obj => "obj".to_string(),
        TypeSpec::Array(e) => format!("[{}]", describe(e)),
        TypeSpec::Object(fields) => {
            let inner: Vec<String> =
                fields.iter().map(|(k, v)| format!("{k}: {}", describe(v))).collect();
            format!("{{{}}}", inner.join(", "))
        }
        TypeSpec::Enum(options) => format!(
            "enum [{}]",
            options
                .iter()
                .map(|o| crate::expr::stringify(o).unwrap_or_default())
                .collect::<Vec<_>>()
                .join(", ")
        ),
        TypeSpec::Optional(inner) => format!("optional {}", describe(inner)),
    }
}

const TYPE_NAMES: &[&str] = &["str", "bool", "int", "float", "null", "obj"];

fn primitive(name: &str) -> Option<TypeSpec> {
    Some(match name {
        "str" => TypeSpec::Str,
        "bool" => TypeSpec::Bool,
        "int" => TypeSpec::Int,
        "float" => TypeSpec::Float,
        "null" => TypeSpec::Null,
        "obj" => TypeSpec::Obj,
        _ => return None,
    })
}

/// Expand the type shorthand found in a document into a [`TypeSpec`].
///
/// Strings use the compact grammar (`"str"`, `"[str]"`,
/// `"{questions: [str], answers: [str]}"`); a one-element list is an array
/// type; a map is an object type, with `{enum: [...]}` and `{optional: T}`
/// recognized as markers. Expansion of an already-expanded form is the
/// identity.
pub fn parse_type_shorthand(v: &Value) -> Result<TypeSpec, String> {
    match v {
        Value::Str(s) => parse_type_string(s.trim()),
        Value::Array(items) => match items.as_slice() {
            [elem] => Ok(TypeSpec::Array(Box::new(parse_type_shorthand(elem)?))),
            _ => Err(format!(
                "array type shorthand takes exactly one element type, found {}",
                items.len()
            )),
        },
        Value::Object(fields) => {
            if fields.len() == 1 {
                if let Some(options) = fields.get("enum") {
                    return match options {
                        Value::Array(items) => Ok(TypeSpec::Enum(items.clone())),
                        _ => Err("enum takes a list of values".to_string()),
                    };
                }
                if let Some(inner) = fields.get("optional") {
                    return Ok(TypeSpec::Optional(Box::new(parse_type_shorthand(inner)?)));
                }
            }
            let mut out = IndexMap::new();
            for (name, field) in fields {
                out.insert(name.clone(), parse_type_shorthand(field)?);
            }
            Ok(TypeSpec::Object(out))
        }
        other => Err(format!("cannot read a type from {}", other.type_name())),
    }
}

/// Parse the string form of the shorthand.
fn parse_type_string(s: &str) -> Result<TypeSpec, String> {
    let s = s.trim();
    if let Some(t) = primitive(s) {
        return Ok(t);
    }
    if let Some(inner) = s.strip_prefix('[').and_then(|rest| rest.strip_suffix(']')) {
        return Ok(TypeSpec::Array(Box::new(parse_type_string(inner)?)));
    }
    if let Some(inner) = s.strip_prefix('{').and_then(|rest| rest.strip_suffix('}')) {
        let mut fields = IndexMap::new();
        for part in split_top_level(inner) {
            let part = part.trim();
            if part.is_empty() {
                continue;
            }
            let (name, ty) = part.split_once(':').ok_or_else(|| {
                format!("expected 'field: type' in object shorthand, found '{part}'")
            })?;
            fields.insert(name.trim().to_string(), parse_type_string(ty)?);
        }
        return Ok(TypeSpec::Object(fields));
    }
    if let Some(inner) = s.strip_prefix("optional ") {
        return Ok(TypeSpec::Optional(Box::new(parse_type_string(inner)?)));
    }
    match nearest_candidate(s, TYPE_NAMES.iter().copied(), 2) {
        Some(suggestion) => Err(format!("unknown type '{s}', did you mean '{suggestion}'?")),
        None => Err(format!("unknown type '{s}'")),
    }
}

/// Split on commas not nested inside brackets or braces.
fn split_top_level(s: &str) -> Vec<String> {
    let mut parts = Vec::new();
    let mut depth = 0;
    let mut cur = String::new();
    for c in s.chars() {
        match c {
            '[' | '{' => {
                depth += 1;
                cur.push(c);
            }
            ']' | '}' => {
                depth -= 1;
                cur.push(c);
            }
            ',' if depth == 0 => parts.push(std::mem::take(&mut cur)),
            c => cur.push(c),
        }
    }
    if !cur.trim().is_empty() {
        parts.push(cur);
    }
    parts
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shorthand(s: &str) -> TypeSpec {
        parse_type_shorthand(&Value::str(s)).unwrap()
    }

    #[test]
    fn shorthand_primitives_and_arrays() {
        assert_eq!(shorthand("str"), TypeSpec::Str);
        assert_eq!(shorthand("[str]"), TypeSpec::Array(Box::new(TypeSpec::Str)));
        assert_eq!(
            shorthand("[[int]]"),
            TypeSpec::Array(Box::new(TypeSpec::Array(Box::new(TypeSpec::Int))))
        );
    }

    #[test]
    fn shorthand_object_string_form() {
        let t = shorthand("{questions: [str], answers: [str]}");
        let TypeSpec::Object(fields) = &t else { panic!() };
        assert_eq!(fields.len(), 2);
        assert_eq!(fields["questions"], TypeSpec::Array(Box::new(TypeSpec::Str)));
    }

    #[test]
    fn shorthand_typo_gets_suggestion() {
        let err = parse_type_shorthand(&Value::str("strr")).unwrap_err();
        assert!(err.contains("did you mean 'str'?"), "{err}");
    }

    #[test]
    fn expansion_is_idempotent_via_describe() {
        let t = shorthand("{a: [int], b: {c: str}}");
        let re = parse_type_shorthand(&Value::str(describe(&t))).unwrap();
        assert_eq!(t, re);
    }

    #[test]
    fn check_react_schema() {
        let schema = shorthand("{name: str, arguments: obj}");
        let ok = json::from_json(r#"{"name":"Search","arguments":{"topic":"x"}}"#).unwrap();
        assert!(check_spec(&ok, &schema).is_ok());
        let missing = json::from_json(r#"{"name":"Finish"}"#).unwrap();
        let err = check_spec(&missing, &schema).unwrap_err();
        assert_eq!(err.path.to_string(), "/arguments");
        assert_eq!(err.found, "missing");
    }

    #[test]
    fn int_rejects_fractional() {
        assert!(check_spec(&Value::float(2.5), &TypeSpec::Int).is_err());
        assert!(check_spec(&Value::float(2.0), &TypeSpec::Int).is_ok());
        assert!(check_spec(&Value::int(2), &TypeSpec::Int).is_ok());
        assert!(check_spec(&Value::int(2), &TypeSpec::Float).is_ok());
    }

    #[test]
    fn extra_fields_are_permitted() {
        let schema = shorthand("{a: int}");
        let v = json::from_json(r#"{"a": 1, "b": "extra"}"#).unwrap();
        assert!(check_spec(&v, &schema).is_ok());
    }

    #[test]
    fn json_parser_round_trip() {
        let raw = r#"{"name":"Search","arguments":{"topic":"Henry Hudson"}}"#;
        let v = apply_parser(&ParserKind::Json, raw).unwrap();
        let Value::Object(fields) = &v else { panic!() };
        assert_eq!(fields["name"], Value::str("Search"));
    }

    #[test]
    fn jsonl_skips_blank_lines() {
        let v = apply_parser(&ParserKind::Jsonl, "1\n\n2\n").unwrap();
        assert_eq!(v, Value::Array(vec![Value::int(1), Value::int(2)]));
    }

    #[test]
    fn regex_named_groups_become_object() {
        let kind = ParserKind::Regex { pattern: r"(?P<a>\d+)-(?P<b>\d+)".to_string() };
        let v = apply_parser(&kind, "3-4").unwrap();
        let Value::Object(fields) = &v else { panic!() };
        assert_eq!(fields["a"], Value::str("3"));
        assert_eq!(fields["b"], Value::str("4"));
    }

    #[test]
    fn regex_requires_full_match() {
        let kind = ParserKind::Regex { pattern: r"\d+".to_string() };
        assert!(apply_parser(&kind, "12x").is_err());
        assert_eq!(apply_parser(&kind, "12").unwrap(), Value::str("12"));
    }

    #[test]
    fn regex_unnamed_groups_become_array() {
        let kind = ParserKind::Regex { pattern: r"(\d+)-(\d+)".to_string() };
        assert_eq!(
            apply_parser(&kind, "3-4").unwrap(),
            Value::Array(vec![Value::str("3"), Value::str("4")])
        );
    }
}
