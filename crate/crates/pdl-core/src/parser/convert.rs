//! Conversion from a validated document tree to the typed AST.
//!
//! Runs only on documents that passed [`super::meta::validate_document`];
//! any shape error here indicates a validator/converter mismatch and is
//! surfaced as an internal diagnostic rather than a panic.

use indexmap::IndexMap;

use crate::ast::{
    Block, BlockBody, ContributeSet, JoinMode, JoinSpec, ObjectBody, ParserKind, Program, TypeSpec,
};
use crate::expr::TemplateExpr;
use crate::typecheck;

use super::yaml::{node_to_value, NodeKind, YamlNode};

type Converted<T> = Result<T, String>;

pub fn convert_program(node: &YamlNode) -> Converted<Program> {
    match &node.kind {
        NodeKind::Seq(items) => {
            let blocks = items.iter().map(convert_block).collect::<Converted<Vec<_>>>()?;
            Ok(Program::List(blocks))
        }
        _ => Ok(Program::single(convert_block(node)?)),
    }
}

fn template(node: &YamlNode) -> Converted<TemplateExpr> {
    match &node.kind {
        NodeKind::Str(s) => TemplateExpr::parse(s),
        NodeKind::Bool(b) => Ok(TemplateExpr::literal(crate::ast::Value::Bool(*b))),
        NodeKind::Int(i) => Ok(TemplateExpr::literal(crate::ast::Value::int(*i))),
        NodeKind::Float(f) => Ok(TemplateExpr::literal(crate::ast::Value::float(*f))),
        other => Err(format!("internal: expression position holds {}", other_name(other))),
    }
}

fn other_name(kind: &NodeKind) -> &'static str {
    match kind {
        NodeKind::Null => "null",
        NodeKind::Seq(_) => "list",
        NodeKind::Map(_) => "mapping",
        _ => "scalar",
    }
}

fn type_spec(node: &YamlNode) -> Converted<TypeSpec> {
    typecheck::parse_type_shorthand(&node_to_value(node))
}

pub fn convert_block(node: &YamlNode) -> Converted<Block> {
    let pairs = match &node.kind {
        NodeKind::Map(pairs) => pairs,
        _ => return Ok(Block::leaf(BlockBody::Expr(template(node)?))),
    };

    let get = |key: &str| -> Option<&YamlNode> { node.get(key) };

    let mut primaries: Vec<&str> = pairs
        .iter()
        .filter_map(|(k, _)| k.as_str())
        .filter(|name| super::meta::BODY_KEYWORDS.contains(name))
        .collect();
    if primaries.contains(&"for") {
        primaries.retain(|k| *k != "repeat");
    }
    let kind = *primaries.first().ok_or("internal: block without body keyword")?;

    let body = match kind {
        "model" => BlockBody::Model {
            model: template(get("model").unwrap())?,
            input: get("input").map(convert_program).transpose()?,
            parameters: match get("parameters") {
                Some(p) => match node_to_value(p) {
                    crate::ast::Value::Object(map) => Some(map),
                    _ => return Err("internal: parameters not a mapping".to_string()),
                },
                None => None,
            },
        },
        "read" => BlockBody::Read {
            file: get("read").and_then(|n| n.as_str().map(str::to_string)),
            message: get("message").and_then(|n| n.as_str().map(str::to_string)),
            multiline: matches!(get("multiline").map(|n| &n.kind), Some(NodeKind::Bool(true))),
        },
        "text" => BlockBody::Text(convert_program(get("text").unwrap())?),
        "lastOf" => BlockBody::LastOf(convert_program(get("lastOf").unwrap())?),
        "array" => BlockBody::Array(convert_program(get("array").unwrap())?),
        "object" => {
            let value = get("object").unwrap();
            match &value.kind {
                NodeKind::Map(entries) => {
                    let mut fields = IndexMap::new();
                    for (k, v) in entries {
                        let name = k.as_str().ok_or("internal: object field name")?;
                        fields.insert(name.to_string(), convert_program(v)?);
                    }
                    BlockBody::Object(ObjectBody::Fields(fields))
                }
                _ => BlockBody::Object(ObjectBody::Blocks(convert_program(value)?)),
            }
        }
        "data" => BlockBody::Data {
            value: node_to_value(get("data").unwrap()),
            raw: matches!(get("raw").map(|n| &n.kind), Some(NodeKind::Bool(true))),
        },
        "include" => BlockBody::Include {
            file: get("include").and_then(|n| n.as_str()).unwrap_or_default().to_string(),
        },
        "function" => {
            let mut params = IndexMap::new();
            if let Some(p) = get("function") {
                if let NodeKind::Map(entries) = &p.kind {
                    for (k, v) in entries {
                        let name = k.as_str().ok_or("internal: parameter name")?;
                        let spec = match &v.kind {
                            NodeKind::Null => None,
                            _ => Some(type_spec(v)?),
                        };
                        params.insert(name.to_string(), spec);
                    }
                }
            }
            BlockBody::Function { params, body: convert_program(get("return").unwrap())? }
        }
        "call" => {
            let mut args = IndexMap::new();
            if let Some(a) = get("args") {
                if let NodeKind::Map(entries) = &a.kind {
                    for (k, v) in entries {
                        let name = k.as_str().ok_or("internal: argument name")?;
                        args.insert(name.to_string(), template(v)?);
                    }
                }
            }
            BlockBody::Call {
                func: template(get("call").unwrap())?,
                args,
                context: get("pdl_context").map(convert_program).transpose()?,
            }
        }
        "if" => BlockBody::If {
            condition: template(get("if").unwrap())?,
            then: convert_program(get("then").unwrap())?,
            otherwise: get("else").map(convert_program).transpose()?,
        },
        "for" => {
            let mut bindings = IndexMap::new();
            if let Some(b) = get("for") {
                if let NodeKind::Map(entries) = &b.kind {
                    for (k, v) in entries {
                        let name = k.as_str().ok_or("internal: loop variable name")?;
                        bindings.insert(name.to_string(), template(v)?);
                    }
                }
            }
            BlockBody::For {
                bindings,
                body: convert_program(get("repeat").unwrap())?,
                join: convert_join(get("join"))?,
            }
        }
        "repeat" => {
            let body = convert_program(get("repeat").unwrap())?;
            let join = convert_join(get("join"))?;
            match get("until") {
                Some(untl) => BlockBody::RepeatUntil { body, until: template(untl)?, join },
                None => BlockBody::Repeat {
                    body,
                    count: match get("num_iterations") {
                        Some(n) => template(n)?,
                        None => TemplateExpr::literal(crate::ast::Value::int(1)),
                    },
                    join,
                },
            }
        }
        "code" => BlockBody::Code {
            source: convert_program(get("code").unwrap())?,
            lang: get("lang").and_then(|n| n.as_str()).unwrap_or_default().to_string(),
        },
        other => return Err(format!("internal: unhandled block kind '{other}'")),
    };

    let mut defs = IndexMap::new();
    if let Some(d) = get("defs") {
        if let NodeKind::Map(entries) = &d.kind {
            for (k, v) in entries {
                let name = k.as_str().ok_or("internal: defs name")?;
                defs.insert(name.to_string(), convert_program(v)?);
            }
        }
    }

    let contribute = match get("contribute") {
        None => ContributeSet::default(),
        Some(c) => {
            let mut set = ContributeSet::none();
            if let NodeKind::Seq(items) = &c.kind {
                for item in items {
                    match item.as_str() {
                        Some("result") => set.result = true,
                        Some("context") => set.context = true,
                        _ => {}
                    }
                }
            }
            set
        }
    };

    let parser = match get("parser") {
        None => None,
        Some(p) => Some(match &p.kind {
            NodeKind::Str(s) => match s.as_str() {
                "json" => ParserKind::Json,
                "yaml" => ParserKind::Yaml,
                "jsonl" => ParserKind::Jsonl,
                other => return Err(format!("internal: unhandled parser '{other}'")),
            },
            NodeKind::Map(_) => ParserKind::Regex {
                pattern: p.get("regex").and_then(|n| n.as_str()).unwrap_or_default().to_string(),
            },
            _ => return Err("internal: parser shape".to_string()),
        }),
    };

    Ok(Block {
        body,
        description: get("description").and_then(|n| n.as_str().map(str::to_string)),
        def: get("def").and_then(|n| n.as_str().map(str::to_string)),
        defs,
        role: get("role").and_then(|n| n.as_str().map(str::to_string)),
        contribute,
        parser,
        spec: get("spec").map(type_spec).transpose()?,
    })
}

fn convert_join(node: Option<&YamlNode>) -> Converted<JoinSpec> {
    let Some(node) = node else {
        return Ok(JoinSpec::default());
    };
    let with = node.get("with").and_then(|n| n.as_str().map(str::to_string));
    let mode = match node.get("as").and_then(|n| n.as_str()) {
        Some("text") => JoinMode::Text,
        Some("array") => JoinMode::Array,
        Some("lastOf") => JoinMode::LastOf,
        Some(other) => return Err(format!("internal: unhandled join mode '{other}'")),
        // `with:` without `as:` implies a text join.
        None if with.is_some() => JoinMode::Text,
        None => JoinMode::LastOf,
    };
    Ok(JoinSpec { mode, with })
}
