//! Position-tracking YAML loader.
//!
//! Builds a document tree where every node carries its source line/column so
//! validation diagnostics can point into the file. Scalars are resolved per
//! the YAML core schema, but only for plain scalars: quoted and block scalars
//! are always strings.

use std::collections::HashMap;

use yaml_rust2::parser::{Event, MarkedEventReceiver, Parser, Tag};
use yaml_rust2::scanner::{Marker, TScalarStyle};

use crate::ast::Value;
use crate::diag::{Diagnostic, DocPath};

#[derive(Debug, Clone, PartialEq)]
pub struct YamlNode {
    pub kind: NodeKind,
    /// 1-based line, 1-based column.
    pub line: usize,
    pub col: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NodeKind {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Seq(Vec<YamlNode>),
    Map(Vec<(YamlNode, YamlNode)>),
}

impl YamlNode {
    pub fn as_str(&self) -> Option<&str> {
        match &self.kind {
            NodeKind::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_scalar(&self) -> bool {
        !matches!(self.kind, NodeKind::Seq(_) | NodeKind::Map(_))
    }

    pub fn type_name(&self) -> &'static str {
        match &self.kind {
            NodeKind::Null => "null",
            NodeKind::Bool(_) => "bool",
            NodeKind::Int(_) => "int",
            NodeKind::Float(_) => "float",
            NodeKind::Str(_) => "string",
            NodeKind::Seq(_) => "list",
            NodeKind::Map(_) => "mapping",
        }
    }

    /// Look up a mapping entry by string key.
    pub fn get(&self, key: &str) -> Option<&YamlNode> {
        match &self.kind {
            NodeKind::Map(pairs) => {
                pairs.iter().find(|(k, _)| k.as_str() == Some(key)).map(|(_, v)| v)
            }
            _ => None,
        }
    }
}

enum Frame {
    Seq {
        items: Vec<YamlNode>,
        line: usize,
        col: usize,
        anchor: usize,
    },
    Map {
        pairs: Vec<(YamlNode, YamlNode)>,
        pending: Option<YamlNode>,
        line: usize,
        col: usize,
        anchor: usize,
    },
}

#[derive(Default)]
struct TreeBuilder {
    docs: Vec<YamlNode>,
    stack: Vec<Frame>,
    anchors: HashMap<usize, YamlNode>,
    error: Option<String>,
}

impl TreeBuilder {
    fn push_node(&mut self, node: YamlNode, anchor: usize) {
        if anchor > 0 {
            self.anchors.insert(anchor, node.clone());
        }
        match self.stack.last_mut() {
            None => self.docs.push(node),
            Some(Frame::Seq { items, .. }) => items.push(node),
            Some(Frame::Map { pairs, pending, .. }) => match pending.take() {
                None => *pending = Some(node),
                Some(key) => pairs.push((key, node)),
            },
        }
    }
}

pub(crate) fn resolve_plain_scalar(text: &str) -> NodeKind {
    match text {
        "" | "~" | "null" | "Null" | "NULL" => return NodeKind::Null,
        "true" | "True" | "TRUE" => return NodeKind::Bool(true),
        "false" | "False" | "FALSE" => return NodeKind::Bool(false),
        _ => {}
    }
    if let Ok(i) = text.parse::<i64>() {
        // Leading plus or leading zeros stay strings under the core schema
        // except the plain forms.
        if text == i.to_string()
            || (text.starts_with('-')
                && text[1..].parse::<i64>().is_ok()
                && !text[1..].starts_with('0'))
        {
            return NodeKind::Int(i);
        }
    }
    if looks_like_float(text) {
        if let Ok(f) = text.parse::<f64>() {
            return NodeKind::Float(f);
        }
    }
    match text {
        ".inf" | ".Inf" | ".INF" | "+.inf" => NodeKind::Float(f64::INFINITY),
        "-.inf" | "-.Inf" | "-.INF" => NodeKind::Float(f64::NEG_INFINITY),
        ".nan" | ".NaN" | ".NAN" => NodeKind::Float(f64::NAN),
        _ => NodeKind::Str(text.to_string()),
    }
}

fn looks_like_float(text: &str) -> bool {
    let body = text.strip_prefix(['-', '+']).unwrap_or(text);
    !body.is_empty()
        && body.bytes().next().is_some_and(|b| b.is_ascii_digit() || b == b'.')
        && body.bytes().all(|b| {
            b.is_ascii_digit() || b == b'.' || b == b'e' || b == b'E' || b == b'+' || b == b'-'
        })
        && (body.contains('.') || body.contains('e') || body.contains('E'))
}

fn resolve_tagged(text: &str, tag: &Tag) -> Option<NodeKind> {
    if tag.handle != "tag:yaml.org,2002:" {
        return None;
    }
    Some(match tag.suffix.as_str() {
        "str" => NodeKind::Str(text.to_string()),
        "null" => NodeKind::Null,
        "bool" => match text {
            "true" | "True" | "TRUE" => NodeKind::Bool(true),
            _ => NodeKind::Bool(false),
        },
        "int" => NodeKind::Int(text.parse().unwrap_or(0)),
        "float" => NodeKind::Float(text.parse().unwrap_or(0.0)),
        _ => return None,
    })
}

impl MarkedEventReceiver for TreeBuilder {
    fn on_event(&mut self, ev: Event, mark: Marker) {
        if self.error.is_some() {
            return;
        }
        let line = mark.line();
        let col = mark.col() + 1;
        match ev {
            Event::StreamStart
            | Event::StreamEnd
            | Event::DocumentStart
            | Event::DocumentEnd
            | Event::Nothing => {}
            Event::Scalar(text, style, anchor, tag) => {
                let kind = match style {
                    TScalarStyle::Plain => match tag {
                        Some(ref t) => {
                            resolve_tagged(&text, t).unwrap_or_else(|| resolve_plain_scalar(&text))
                        }
                        None => resolve_plain_scalar(&text),
                    },
                    _ => NodeKind::Str(text),
                };
                self.push_node(YamlNode { kind, line, col }, anchor);
            }
            Event::SequenceStart(anchor, _tag) => {
                self.stack.push(Frame::Seq { items: Vec::new(), line, col, anchor });
            }
            Event::SequenceEnd => match self.stack.pop() {
                Some(Frame::Seq { items, line, col, anchor }) => {
                    self.push_node(YamlNode { kind: NodeKind::Seq(items), line, col }, anchor);
                }
                _ => self.error = Some("mismatched sequence end".to_string()),
            },
            Event::MappingStart(anchor, _tag) => {
                self.stack.push(Frame::Map { pairs: Vec::new(), pending: None, line, col, anchor });
            }
            Event::MappingEnd => match self.stack.pop() {
                Some(Frame::Map { pairs, line, col, anchor, pending }) => {
                    if pending.is_some() {
                        self.error = Some("mapping key without a value".to_string());
                        return;
                    }
                    self.push_node(YamlNode { kind: NodeKind::Map(pairs), line, col }, anchor);
                }
                _ => self.error = Some("mismatched mapping end".to_string()),
            },
            Event::Alias(anchor) => match self.anchors.get(&anchor) {
                Some(node) => {
                    let node = node.clone();
                    self.push_node(node, 0);
                }
                None => self.error = Some(format!("unknown alias anchor {anchor}")),
            },
        }
    }
}

/// Parse YAML text into a single marked document tree.
pub fn load_yaml(text: &str) -> Result<YamlNode, Diagnostic> {
    let mut builder = TreeBuilder::default();
    let mut parser = Parser::new_from_str(text);
    if let Err(e) = parser.load(&mut builder, false) {
        let marker = e.marker();
        return Err(Diagnostic::error(DocPath::root(), format!("YAML syntax error: {}", e.info()))
            .at(marker.line(), marker.col() + 1));
    }
    if let Some(msg) = builder.error {
        return Err(Diagnostic::error(DocPath::root(), format!("YAML structure error: {msg}")));
    }
    match builder.docs.len() {
        0 => Err(Diagnostic::error(DocPath::root(), "empty document")),
        1 => Ok(builder.docs.into_iter().next().unwrap()),
        n => Err(Diagnostic::error(
            DocPath::root(),
            format!("expected one YAML document, found {n}"),
        )),
    }
}

/// Convert a document tree to a runtime value (for `parser: yaml` and data
/// trees). Mapping keys become strings.
pub fn node_to_value(node: &YamlNode) -> Value {
    match &node.kind {
        NodeKind::Null => Value::Null,
        NodeKind::Bool(b) => Value::Bool(*b),
        NodeKind::Int(i) => Value::int(*i),
        NodeKind::Float(f) => Value::float(*f),
        NodeKind::Str(s) => Value::Str(s.clone()),
        NodeKind::Seq(items) => Value::Array(items.iter().map(node_to_value).collect()),
        NodeKind::Map(pairs) => {
            let mut map = indexmap::IndexMap::new();
            for (k, v) in pairs {
                let key = match &k.kind {
                    NodeKind::Str(s) => s.clone(),
                    NodeKind::Int(i) => i.to_string(),
                    NodeKind::Float(f) => format!("{f:?}"),
                    NodeKind::Bool(b) => b.to_string(),
                    NodeKind::Null => "null".to_string(),
                    _ => continue,
                };
                map.insert(key, node_to_value(v));
            }
            Value::Object(map)
        }
    }
}

/// Parse YAML text straight to a value.
pub fn yaml_to_value(text: &str) -> Result<Value, String> {
    let node = load_yaml(text).map_err(|d| d.message)?;
    Ok(node_to_value(&node))
}
