//! Canonical YAML serialization of programs (block style).
//!
//! Output is deterministic: fixed keyword order, two-space indent, plain
//! scalars only where they round-trip, double quotes otherwise. Parsing the
//! output of `emit_program` yields the same AST back.

use crate::ast::{
    Block, BlockBody, ContributeSet, JoinMode, JoinSpec, Number, ObjectBody, ParserKind, Program,
    TypeSpec, Value,
};
use crate::expr::TemplateExpr;

use super::yaml::NodeKind;

/// Intermediate form: scalars are pre-rendered, layout is decided once.
enum Y {
    S(String),
    Seq(Vec<Y>),
    Map(Vec<(String, Y)>),
}

pub fn emit_program(program: &Program) -> String {
    let mut out = String::new();
    write_at(&y_program(program), 0, &mut out);
    out
}

fn write_at(y: &Y, indent: usize, out: &mut String) {
    let pad = " ".repeat(indent);
    match y {
        Y::S(s) => {
            out.push_str(&pad);
            out.push_str(s);
            out.push('\n');
        }
        Y::Seq(items) => {
            if items.is_empty() {
                out.push_str(&pad);
                out.push_str("[]\n");
                return;
            }
            for item in items {
                let mut tmp = String::new();
                write_at(item, indent + 2, &mut tmp);
                out.push_str(&pad);
                out.push_str("- ");
                out.push_str(&tmp[indent + 2..]);
            }
        }
        Y::Map(entries) => {
            if entries.is_empty() {
                out.push_str(&pad);
                out.push_str("{}\n");
                return;
            }
            for (key, value) in entries {
                out.push_str(&pad);
                out.push_str(&render_string(key));
                out.push(':');
                match value {
                    Y::S(s) => {
                        out.push(' ');
                        out.push_str(s);
                        out.push('\n');
                    }
                    Y::Seq(items) if items.is_empty() => out.push_str(" []\n"),
                    Y::Map(m) if m.is_empty() => out.push_str(" {}\n"),
                    nested => {
                        out.push('\n');
                        write_at(nested, indent + 2, out);
                    }
                }
            }
        }
    }
}

fn render_string(s: &str) -> String {
    if plain_scalar_safe(s) {
        s.to_string()
    } else {
        let mut out = String::new();
        crate::json::write_json_string(s, &mut out);
        out
    }
}

/// A string may be emitted as a plain scalar only if YAML will read it back
/// as the same string.
fn plain_scalar_safe(s: &str) -> bool {
    if s.is_empty() || s.len() > 120 {
        return false;
    }
    if !matches!(super::yaml::resolve_plain_scalar(s), NodeKind::Str(_)) {
        return false;
    }
    let first = s.chars().next().unwrap();
    if !(first.is_ascii_alphanumeric() || first == '_' || first == '$') {
        return false;
    }
    if s.ends_with([':', ' ']) || s.contains(": ") || s.contains(" #") {
        return false;
    }
    s.chars().all(|c| c.is_ascii_alphanumeric() || " _$({}).,=!<>+*/%|'-".contains(c))
}

fn scalar(v: &Value) -> String {
    match v {
        Value::Null => "null".to_string(),
        Value::Bool(true) => "true".to_string(),
        Value::Bool(false) => "false".to_string(),
        Value::Num(Number::Int(i)) => i.to_string(),
        Value::Num(Number::Float(f)) => format!("{f:?}"),
        Value::Str(s) => render_string(s),
        _ => unreachable!("containers are rendered structurally"),
    }
}

fn y_value(v: &Value) -> Y {
    match v {
        Value::Array(items) => Y::Seq(items.iter().map(y_value).collect()),
        Value::Object(fields) => {
            Y::Map(fields.iter().map(|(k, v)| (k.clone(), y_value(v))).collect())
        }
        Value::Closure(_) => Y::S("null".to_string()),
        scalar_value => Y::S(scalar(scalar_value)),
    }
}

fn y_template(t: &TemplateExpr) -> Y {
    y_value(&t.source_value())
}

fn y_program(p: &Program) -> Y {
    match p {
        Program::Single(b) => y_block(b),
        Program::List(blocks) => Y::Seq(blocks.iter().map(y_block).collect()),
    }
}

fn typespec_value(t: &TypeSpec) -> Value {
    match t {
        TypeSpec::Str => Value::str("str"),
        TypeSpec::Bool => Value::str("bool"),
        TypeSpec::Int => Value::str("int"),
        TypeSpec::Float => Value::str("float"),
        TypeSpec::Null => Value::str("null"),
        TypeSpec::Obj => Value::str("obj"),
        TypeSpec::Array(e) => Value::Array(vec![typespec_value(e)]),
        TypeSpec::Object(fields) => {
            Value::Object(fields.iter().map(|(k, v)| (k.clone(), typespec_value(v))).collect())
        }
        TypeSpec::Enum(options) => {
            let mut map = indexmap::IndexMap::new();
            map.insert("enum".to_string(), Value::Array(options.clone()));
            Value::Object(map)
        }
        TypeSpec::Optional(inner) => {
            let mut map = indexmap::IndexMap::new();
            map.insert("optional".to_string(), typespec_value(inner));
            Value::Object(map)
        }
    }
}

fn y_block(b: &Block) -> Y {
    let bare = b.description.is_none()
        && b.def.is_none()
        && b.defs.is_empty()
        && b.role.is_none()
        && b.contribute == ContributeSet::default()
        && b.parser.is_none()
        && b.spec.is_none();
    if bare {
        if let BlockBody::Expr(e) = &b.body {
            return y_template(e);
        }
    }

    let mut entries: Vec<(String, Y)> = Vec::new();
    if let Some(d) = &b.description {
        entries.push(("description".into(), Y::S(render_string(d))));
    }
    if let Some(d) = &b.def {
        entries.push(("def".into(), Y::S(render_string(d))));
    }
    if !b.defs.is_empty() {
        entries.push((
            "defs".into(),
            Y::Map(b.defs.iter().map(|(k, v)| (k.clone(), y_program(v))).collect()),
        ));
    }
    if let Some(r) = &b.role {
        entries.push(("role".into(), Y::S(render_string(r))));
    }
    if b.contribute != ContributeSet::default() {
        let mut dests = Vec::new();
        if b.contribute.result {
            dests.push(Y::S("result".into()));
        }
        if b.contribute.context {
            dests.push(Y::S("context".into()));
        }
        entries.push(("contribute".into(), Y::Seq(dests)));
    }
    if let Some(p) = &b.parser {
        let y = match p {
            ParserKind::Json => Y::S("json".into()),
            ParserKind::Yaml => Y::S("yaml".into()),
            ParserKind::Jsonl => Y::S("jsonl".into()),
            ParserKind::Regex { pattern } => {
                Y::Map(vec![("regex".into(), Y::S(render_string(pattern)))])
            }
        };
        entries.push(("parser".into(), y));
    }
    if let Some(s) = &b.spec {
        entries.push(("spec".into(), y_value(&typespec_value(s))));
    }

    match &b.body {
        BlockBody::Expr(e) => entries.push(("text".into(), y_template(e))),
        BlockBody::Model { model, input, parameters } => {
            entries.push(("model".into(), y_template(model)));
            if let Some(i) = input {
                entries.push(("input".into(), y_program(i)));
            }
            if let Some(p) = parameters {
                entries.push((
                    "parameters".into(),
                    Y::Map(p.iter().map(|(k, v)| (k.clone(), y_value(v))).collect()),
                ));
            }
        }
        BlockBody::Read { file, message, multiline } => {
            entries.push((
                "read".into(),
                Y::S(file.as_deref().map(render_string).unwrap_or_else(|| "null".into())),
            ));
            if let Some(m) = message {
                entries.push(("message".into(), Y::S(render_string(m))));
            }
            if *multiline {
                entries.push(("multiline".into(), Y::S("true".into())));
            }
        }
        BlockBody::Text(p) => entries.push(("text".into(), y_program(p))),
        BlockBody::LastOf(p) => entries.push(("lastOf".into(), y_program(p))),
        BlockBody::Array(p) => entries.push(("array".into(), y_program(p))),
        BlockBody::Object(ObjectBody::Fields(fields)) => entries.push((
            "object".into(),
            Y::Map(fields.iter().map(|(k, v)| (k.clone(), y_program(v))).collect()),
        )),
        BlockBody::Object(ObjectBody::Blocks(p)) => {
            // The list form must stay a sequence even for a single block.
            let y = match p {
                Program::Single(b) => Y::Seq(vec![y_block(b)]),
                Program::List(_) => y_program(p),
            };
            entries.push(("object".into(), y));
        }
        BlockBody::Data { value, raw } => {
            entries.push(("data".into(), y_value(value)));
            if *raw {
                entries.push(("raw".into(), Y::S("true".into())));
            }
        }
        BlockBody::Include { file } => entries.push(("include".into(), Y::S(render_string(file)))),
        BlockBody::Function { params, body } => {
            let y = if params.is_empty() {
                Y::S("null".into())
            } else {
                Y::Map(
                    params
                        .iter()
                        .map(|(k, v)| {
                            let ty = match v {
                                Some(t) => y_value(&typespec_value(t)),
                                None => Y::S("null".into()),
                            };
                            (k.clone(), ty)
                        })
                        .collect(),
                )
            };
            entries.push(("function".into(), y));
            entries.push(("return".into(), y_program(body)));
        }
        BlockBody::Call { func, args, context } => {
            entries.push(("call".into(), y_template(func)));
            if !args.is_empty() {
                entries.push((
                    "args".into(),
                    Y::Map(args.iter().map(|(k, v)| (k.clone(), y_template(v))).collect()),
                ));
            }
            if let Some(c) = context {
                entries.push(("pdl_context".into(), y_program(c)));
            }
        }
        BlockBody::If { condition, then, otherwise } => {
            entries.push(("if".into(), y_template(condition)));
            entries.push(("then".into(), y_program(then)));
            if let Some(e) = otherwise {
                entries.push(("else".into(), y_program(e)));
            }
        }
        BlockBody::For { bindings, body, join } => {
            entries.push((
                "for".into(),
                Y::Map(bindings.iter().map(|(k, v)| (k.clone(), y_template(v))).collect()),
            ));
            entries.push(("repeat".into(), y_program(body)));
            push_join(&mut entries, join);
        }
        BlockBody::Repeat { body, count, join } => {
            entries.push(("repeat".into(), y_program(body)));
            if count != &TemplateExpr::literal(Value::int(1)) {
                entries.push(("num_iterations".into(), y_template(count)));
            }
            push_join(&mut entries, join);
        }
        BlockBody::RepeatUntil { body, until, join } => {
            entries.push(("repeat".into(), y_program(body)));
            entries.push(("until".into(), y_template(until)));
            push_join(&mut entries, join);
        }
        BlockBody::Code { source, lang } => {
            entries.push(("code".into(), y_program(source)));
            entries.push(("lang".into(), Y::S(render_string(lang))));
        }
    }

    Y::Map(entries)
}

fn push_join(entries: &mut Vec<(String, Y)>, join: &JoinSpec) {
    if join == &JoinSpec::default() {
        return;
    }
    let mut inner = Vec::new();
    match join.mode {
        JoinMode::Text => inner.push(("as".to_string(), Y::S("text".into()))),
        JoinMode::Array => inner.push(("as".to_string(), Y::S("array".into()))),
        JoinMode::LastOf => inner.push(("as".to_string(), Y::S("lastOf".into()))),
    }
    if let Some(w) = &join.with {
        inner.push(("with".to_string(), Y::S(render_string(w))));
    }
    entries.push(("join".into(), Y::Map(inner)));
}
