//! The PDL meta-schema: what constitutes a valid document.
//!
//! A block is a scalar expression or a mapping with exactly one body keyword
//! group plus the structured keywords. Validation walks the document against
//! these tables and reports every violation with a path; the typed converter
//! accepts exactly the documents that validate cleanly.

use crate::diag::{nearest_candidate, Diagnostic, DocPath};
use crate::expr::TemplateExpr;
use crate::typecheck;

use super::yaml::{node_to_value, NodeKind, YamlNode};

/// Keywords that determine a block's kind.
pub const BODY_KEYWORDS: &[&str] = &[
    "model", "read", "text", "lastOf", "array", "object", "data", "include", "function", "call",
    "if", "for", "repeat", "code",
];

/// Keywords every block kind accepts.
pub const STRUCTURED_KEYWORDS: &[&str] =
    &["description", "def", "defs", "role", "contribute", "parser", "spec"];

/// Sibling keywords each block kind accepts, with the ones it requires.
fn companions(kind: &str) -> (&'static [&'static str], &'static [&'static str]) {
    match kind {
        "model" => (&["input", "parameters"], &[]),
        "read" => (&["message", "multiline"], &[]),
        "data" => (&["raw"], &[]),
        "function" => (&["return"], &["return"]),
        "call" => (&["args", "pdl_context"], &[]),
        "if" => (&["then", "else"], &["then"]),
        "for" => (&["repeat", "join"], &["repeat"]),
        "repeat" => (&["num_iterations", "until", "join"], &[]),
        "code" => (&["lang"], &["lang"]),
        _ => (&[], &[]),
    }
}

struct Ctx {
    diags: Vec<Diagnostic>,
}

impl Ctx {
    fn error(&mut self, node: &YamlNode, path: &DocPath, message: impl Into<String>) {
        self.diags.push(Diagnostic::error(path.clone(), message).at(node.line, node.col));
    }
}

/// Validate a raw document tree against the meta-schema. Returns the empty
/// list iff the document is a valid PDL program.
pub fn validate_document(doc: &YamlNode) -> Vec<Diagnostic> {
    let mut ctx = Ctx { diags: Vec::new() };
    validate_program(&mut ctx, doc, &DocPath::root());
    ctx.diags
}

fn validate_program(ctx: &mut Ctx, node: &YamlNode, path: &DocPath) {
    match &node.kind {
        NodeKind::Seq(items) => {
            for (i, item) in items.iter().enumerate() {
                validate_block(ctx, item, &path.index(i));
            }
        }
        _ => validate_block(ctx, node, path),
    }
}

fn validate_block(ctx: &mut Ctx, node: &YamlNode, path: &DocPath) {
    match &node.kind {
        NodeKind::Str(s) => validate_template(ctx, node, path, s),
        NodeKind::Bool(_) | NodeKind::Int(_) | NodeKind::Float(_) => {}
        NodeKind::Null => {
            ctx.error(node, path, "a block must be an expression or a mapping, found null")
        }
        NodeKind::Seq(_) => ctx.error(
            node,
            path,
            "a block must be an expression or a mapping; a nested list is only valid as a block body (e.g. under then: or repeat:)",
        ),
        NodeKind::Map(pairs) => validate_block_map(ctx, node, pairs, path),
    }
}

fn validate_template(ctx: &mut Ctx, node: &YamlNode, path: &DocPath, raw: &str) {
    if let Err(e) = TemplateExpr::parse(raw) {
        ctx.error(node, path, e);
    }
}

fn block_keys(pairs: &[(YamlNode, YamlNode)]) -> Vec<(String, &YamlNode, &YamlNode)> {
    let mut keys = Vec::new();
    for (k, v) in pairs {
        if let Some(name) = k.as_str() {
            keys.push((name.to_string(), k, v));
        }
    }
    keys
}

fn validate_block_map(
    ctx: &mut Ctx,
    node: &YamlNode,
    pairs: &[(YamlNode, YamlNode)],
    path: &DocPath,
) {
    // Keys must be strings and unique.
    let mut seen: Vec<&str> = Vec::new();
    for (k, _) in pairs {
        match k.as_str() {
            None => ctx.error(
                k,
                path,
                format!("block keywords must be strings, found {}", k.type_name()),
            ),
            Some(name) => {
                if seen.contains(&name) {
                    ctx.error(k, &path.key(name), format!("duplicate keyword '{name}'"));
                }
                seen.push(name);
            }
        }
    }

    let keys = block_keys(pairs);

    // Determine the block kind from the body keywords present. `repeat:` is
    // the loop body when `for:` is present.
    let mut primaries: Vec<&str> = keys
        .iter()
        .map(|(name, _, _)| name.as_str())
        .filter(|name| BODY_KEYWORDS.contains(name))
        .collect();
    if primaries.contains(&"for") {
        primaries.retain(|k| *k != "repeat");
    }

    if primaries.len() > 1 {
        ctx.error(
            node,
            path,
            format!(
                "ambiguous block kind: both '{}' and '{}' are present",
                primaries[0], primaries[1]
            ),
        );
        return;
    }
    let Some(kind) = primaries.first().copied() else {
        let unknown: Vec<&str> = keys
            .iter()
            .map(|(name, _, _)| name.as_str())
            .filter(|name| !STRUCTURED_KEYWORDS.contains(name))
            .collect();
        let mut message = "missing block body: no block keyword found".to_string();
        if let Some(first) = unknown.first() {
            if let Some(suggestion) = nearest_candidate(first, BODY_KEYWORDS.iter().copied(), 2) {
                message = format!(
                    "missing block body: unknown keyword '{first}', did you mean '{suggestion}'?"
                );
            } else {
                message = format!("missing block body: unknown keyword '{first}'");
            }
        }
        ctx.error(node, path, message);
        return;
    };

    let (allowed_companions, required) = companions(kind);

    // Reject unknown or misplaced keywords.
    for (name, key_node, _) in &keys {
        let name = name.as_str();
        if name == kind
            || STRUCTURED_KEYWORDS.contains(&name)
            || allowed_companions.contains(&name)
            || (kind == "for" && name == "repeat")
        {
            continue;
        }
        if BODY_KEYWORDS.contains(&name) {
            continue; // already reported as ambiguous, unreachable here
        }
        let all_known: Vec<&str> = BODY_KEYWORDS
            .iter()
            .chain(STRUCTURED_KEYWORDS)
            .chain(allowed_companions)
            .copied()
            .collect();
        if all_known.contains(&name) || name == "then" || name == "else" || name == "until" {
            ctx.error(
                key_node,
                &path.key(name),
                format!("keyword '{name}' is not valid in a '{kind}' block"),
            );
        } else {
            match nearest_candidate(name, all_known.iter().copied(), 2) {
                Some(s) => ctx.error(
                    key_node,
                    &path.key(name),
                    format!("unknown keyword '{name}', did you mean '{s}'?"),
                ),
                None => ctx.error(key_node, &path.key(name), format!("unknown keyword '{name}'")),
            }
        }
    }

    for req in required {
        if !keys.iter().any(|(name, _, _)| name == req) {
            ctx.error(node, path, format!("'{kind}' block requires '{req}:'"));
        }
    }
    if kind == "repeat" {
        let has_n = keys.iter().any(|(n, _, _)| n == "num_iterations");
        let has_until = keys.iter().any(|(n, _, _)| n == "until");
        if has_n && has_until {
            ctx.error(node, path, "repeat block cannot have both 'num_iterations' and 'until'");
        }
    }

    // Validate each keyword's value.
    for (name, _, value) in &keys {
        let vpath = path.key(name.clone());
        match name.as_str() {
            "description" => expect_string(ctx, value, &vpath, "description"),
            "def" => validate_name(ctx, value, &vpath),
            "defs" => validate_defs(ctx, value, &vpath),
            "role" => {
                expect_string(ctx, value, &vpath, "role");
                if value.as_str() == Some("") {
                    ctx.error(value, &vpath, "role must not be empty");
                }
            }
            "contribute" => validate_contribute(ctx, value, &vpath),
            "parser" => validate_parser(ctx, value, &vpath),
            "spec" => validate_spec(ctx, value, &vpath),
            "model" | "call" => {
                expect_string(ctx, value, &vpath, name);
                if let Some(s) = value.as_str() {
                    validate_template(ctx, value, &vpath, s);
                }
            }
            "read" => {
                if !matches!(value.kind, NodeKind::Str(_) | NodeKind::Null) {
                    ctx.error(
                        value,
                        &vpath,
                        format!(
                            "read takes a file path or null (stdin), found {}",
                            value.type_name()
                        ),
                    );
                }
            }
            "include" | "lang" => {
                expect_string(ctx, value, &vpath, name);
                if value.as_str() == Some("") {
                    ctx.error(value, &vpath, format!("{name} must not be empty"));
                }
            }
            "message" => expect_string(ctx, value, &vpath, "message"),
            "multiline" | "raw" => {
                if !matches!(value.kind, NodeKind::Bool(_)) {
                    ctx.error(
                        value,
                        &vpath,
                        format!("{name} must be a bool, found {}", value.type_name()),
                    );
                }
            }
            "if" | "until" | "num_iterations" => validate_expr_position(ctx, value, &vpath),
            "input" | "pdl_context" | "then" | "else" | "return" | "text" | "lastOf" | "array" => {
                validate_program(ctx, value, &vpath)
            }
            "repeat" => validate_program(ctx, value, &vpath),
            "code" => validate_program(ctx, value, &vpath),
            "object" => match &value.kind {
                NodeKind::Map(entries) => {
                    for (k, v) in entries {
                        match k.as_str() {
                            Some(fname) => validate_program(ctx, v, &vpath.key(fname)),
                            None => ctx.error(k, &vpath, "object field names must be strings"),
                        }
                    }
                }
                NodeKind::Seq(_) => validate_program(ctx, value, &vpath),
                _ => ctx.error(
                    value,
                    &vpath,
                    format!(
                        "object takes a field mapping or a list of blocks, found {}",
                        value.type_name()
                    ),
                ),
            },
            "data" => {} // arbitrary tree; PDL keywords inside are plain data
            "parameters" => validate_parameters(ctx, value, &vpath),
            "function" => validate_params(ctx, value, &vpath),
            "args" => validate_args(ctx, value, &vpath),
            "for" => validate_for_bindings(ctx, value, &vpath),
            "join" => validate_join(ctx, value, &vpath),
            _ => {} // unknown keys reported above
        }
    }
}

fn expect_string(ctx: &mut Ctx, node: &YamlNode, path: &DocPath, what: &str) {
    if !matches!(node.kind, NodeKind::Str(_)) {
        ctx.error(node, path, format!("{what} must be a string, found {}", node.type_name()));
    }
}

fn validate_name(ctx: &mut Ctx, node: &YamlNode, path: &DocPath) {
    match node.as_str() {
        None => {
            ctx.error(node, path, format!("expected a variable name, found {}", node.type_name()))
        }
        Some(name) => validate_name_str(ctx, node, path, name),
    }
}

fn validate_name_str(ctx: &mut Ctx, node: &YamlNode, path: &DocPath, name: &str) {
    let valid = !name.is_empty()
        && name.chars().next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
        && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_');
    if !valid {
        ctx.error(node, path, format!("'{name}' is not a valid variable name"));
    } else if name == crate::ast::CONTEXT_VAR {
        ctx.error(node, path, "'context' is reserved for the background context");
    }
}

fn validate_defs(ctx: &mut Ctx, node: &YamlNode, path: &DocPath) {
    match &node.kind {
        NodeKind::Map(pairs) => {
            for (k, v) in pairs {
                match k.as_str() {
                    Some(name) => {
                        validate_name_str(ctx, k, &path.key(name), name);
                        validate_program(ctx, v, &path.key(name));
                    }
                    None => ctx.error(k, path, "defs names must be strings"),
                }
            }
        }
        _ => ctx.error(
            node,
            path,
            format!("defs takes a mapping of names to programs, found {}", node.type_name()),
        ),
    }
}

fn validate_contribute(ctx: &mut Ctx, node: &YamlNode, path: &DocPath) {
    match &node.kind {
        NodeKind::Seq(items) => {
            for (i, item) in items.iter().enumerate() {
                match item.as_str() {
                    Some("result") | Some("context") => {}
                    Some(other) => ctx.error(
                        item,
                        &path.index(i),
                        format!("unknown contribute destination '{other}' (expected 'result' or 'context')"),
                    ),
                    None => ctx.error(item, &path.index(i), "unknown contribute destination (expected 'result' or 'context')"),
                }
            }
        }
        _ => ctx.error(
            node,
            path,
            format!("contribute takes a list of destinations, found {}", node.type_name()),
        ),
    }
}

fn validate_parser(ctx: &mut Ctx, node: &YamlNode, path: &DocPath) {
    match &node.kind {
        NodeKind::Str(s) => match s.as_str() {
            "json" | "yaml" | "jsonl" => {}
            other => match nearest_candidate(other, ["json", "yaml", "jsonl", "regex"], 2) {
                Some(sug) => ctx.error(
                    node,
                    path,
                    format!("unknown parser '{other}', did you mean '{sug}'?"),
                ),
                None => ctx.error(node, path, format!("unknown parser '{other}'")),
            },
        },
        NodeKind::Map(pairs) => {
            let mut has_regex = false;
            for (k, v) in pairs {
                match k.as_str() {
                    Some("regex") => {
                        has_regex = true;
                        match v.as_str() {
                            Some(pattern) => {
                                if let Err(e) = regex::Regex::new(&format!("^(?:{pattern})$")) {
                                    ctx.error(v, &path.key("regex"), format!("invalid regex: {e}"));
                                }
                            }
                            None => {
                                ctx.error(v, &path.key("regex"), "regex pattern must be a string")
                            }
                        }
                    }
                    Some("mode") => {
                        if v.as_str() != Some("fullmatch") {
                            ctx.error(
                                v,
                                &path.key("mode"),
                                "the only supported regex mode is 'fullmatch'",
                            );
                        }
                    }
                    Some(other) => {
                        ctx.error(k, &path.key(other), format!("unknown parser option '{other}'"))
                    }
                    None => ctx.error(k, path, "parser options must be strings"),
                }
            }
            if !has_regex {
                ctx.error(node, path, "parser mapping requires a 'regex' pattern");
            }
        }
        _ => ctx.error(
            node,
            path,
            format!(
                "parser must be json, yaml, jsonl, or a regex mapping, found {}",
                node.type_name()
            ),
        ),
    }
}

fn validate_spec(ctx: &mut Ctx, node: &YamlNode, path: &DocPath) {
    if let Err(e) = typecheck::parse_type_shorthand(&node_to_value(node)) {
        ctx.error(node, path, e);
    }
}

fn validate_expr_position(ctx: &mut Ctx, node: &YamlNode, path: &DocPath) {
    match &node.kind {
        NodeKind::Str(s) => validate_template(ctx, node, path, s),
        NodeKind::Bool(_) | NodeKind::Int(_) | NodeKind::Float(_) => {}
        other => {
            let _ = other;
            ctx.error(
                node,
                path,
                format!(
                    "expected an expression (string, number, or bool), found {}",
                    node.type_name()
                ),
            );
        }
    }
}

fn validate_parameters(ctx: &mut Ctx, node: &YamlNode, path: &DocPath) {
    match &node.kind {
        NodeKind::Map(_) => validate_templates_in_tree(ctx, node, path),
        _ => ctx.error(
            node,
            path,
            format!("parameters must be a mapping, found {}", node.type_name()),
        ),
    }
}

fn validate_templates_in_tree(ctx: &mut Ctx, node: &YamlNode, path: &DocPath) {
    match &node.kind {
        NodeKind::Str(s) => validate_template(ctx, node, path, s),
        NodeKind::Seq(items) => {
            for (i, item) in items.iter().enumerate() {
                validate_templates_in_tree(ctx, item, &path.index(i));
            }
        }
        NodeKind::Map(pairs) => {
            for (k, v) in pairs {
                let key = k.as_str().unwrap_or("?");
                validate_templates_in_tree(ctx, v, &path.key(key));
            }
        }
        _ => {}
    }
}

fn validate_params(ctx: &mut Ctx, node: &YamlNode, path: &DocPath) {
    match &node.kind {
        NodeKind::Null => {} // a function with no parameters
        NodeKind::Map(pairs) => {
            for (k, v) in pairs {
                match k.as_str() {
                    Some(name) => {
                        validate_name_str(ctx, k, &path.key(name), name);
                        if !matches!(v.kind, NodeKind::Null) {
                            validate_spec(ctx, v, &path.key(name));
                        }
                    }
                    None => ctx.error(k, path, "parameter names must be strings"),
                }
            }
        }
        _ => ctx.error(
            node,
            path,
            format!("function takes a parameter mapping or null, found {}", node.type_name()),
        ),
    }
}

fn validate_args(ctx: &mut Ctx, node: &YamlNode, path: &DocPath) {
    match &node.kind {
        NodeKind::Map(pairs) => {
            for (k, v) in pairs {
                match k.as_str() {
                    Some(name) => {
                        validate_name_str(ctx, k, &path.key(name), name);
                        validate_expr_position(ctx, v, &path.key(name));
                    }
                    None => ctx.error(k, path, "argument names must be strings"),
                }
            }
        }
        _ => ctx.error(node, path, format!("args must be a mapping, found {}", node.type_name())),
    }
}

fn validate_for_bindings(ctx: &mut Ctx, node: &YamlNode, path: &DocPath) {
    match &node.kind {
        NodeKind::Map(pairs) if !pairs.is_empty() => {
            for (k, v) in pairs {
                match k.as_str() {
                    Some(name) => {
                        validate_name_str(ctx, k, &path.key(name), name);
                        validate_expr_position(ctx, v, &path.key(name));
                    }
                    None => ctx.error(k, path, "loop variable names must be strings"),
                }
            }
        }
        NodeKind::Map(_) => ctx.error(node, path, "for requires at least one loop variable"),
        _ => ctx.error(
            node,
            path,
            format!("for takes a mapping of loop variables, found {}", node.type_name()),
        ),
    }
}

fn validate_join(ctx: &mut Ctx, node: &YamlNode, path: &DocPath) {
    match &node.kind {
        NodeKind::Map(pairs) => {
            for (k, v) in pairs {
                match k.as_str() {
                    Some("as") => match v.as_str() {
                        Some("text") | Some("array") | Some("lastOf") => {}
                        Some(other) => {
                            match nearest_candidate(other, ["text", "array", "lastOf"], 2) {
                                Some(s) => ctx.error(
                                    v,
                                    &path.key("as"),
                                    format!("unknown join mode '{other}', did you mean '{s}'?"),
                                ),
                                None => ctx.error(
                                    v,
                                    &path.key("as"),
                                    format!("unknown join mode '{other}'"),
                                ),
                            }
                        }
                        None => ctx.error(
                            v,
                            &path.key("as"),
                            "join mode must be text, array, or lastOf",
                        ),
                    },
                    Some("with") => expect_string(ctx, v, &path.key("with"), "join separator"),
                    Some(other) => {
                        ctx.error(k, &path.key(other), format!("unknown join option '{other}'"))
                    }
                    None => ctx.error(k, path, "join options must be strings"),
                }
            }
        }
        _ => ctx.error(node, path, format!("join takes a mapping, found {}", node.type_name())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parser::yaml::load_yaml;

    fn check(text: &str) -> Vec<Diagnostic> {
        validate_document(&load_yaml(text).unwrap())
    }

    #[test]
    fn scalar_document_is_valid() {
        assert!(check("\"hello\"").is_empty());
        assert!(check("42").is_empty());
    }

    #[test]
    fn ambiguous_block_kind() {
        let diags = check("model: m\nread: f\n");
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("ambiguous block kind"), "{}", diags[0].message);
    }

    #[test]
    fn unknown_contribute_destination() {
        let diags = check("data: 1\ncontribute: [result, bogus]\n");
        assert_eq!(diags.len(), 1);
        assert!(
            diags[0].message.contains("unknown contribute destination"),
            "{}",
            diags[0].message
        );
        assert_eq!(diags[0].path.to_string(), "/contribute/1");
    }

    #[test]
    fn wrong_type_until_is_one_error() {
        let diags = check("repeat: x\nuntil: [1, 2]\n");
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].path.to_string(), "/until");
    }

    #[test]
    fn unknown_keyword_gets_suggestion() {
        let diags = check("modell: m\n");
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("did you mean 'model'?"), "{}", diags[0].message);
    }

    #[test]
    fn misplaced_keyword_is_reported() {
        let diags = check("data: 1\nthen: x\n");
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("not valid in a 'data' block"), "{}", diags[0].message);
    }

    #[test]
    fn data_tree_keywords_are_ignored() {
        assert!(check("data:\n  if: 1\n  then: 2\n").is_empty());
    }

    #[test]
    fn spec_shorthand_typo() {
        let diags = check("data: 1\nspec: strr\n");
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("did you mean 'str'?"), "{}", diags[0].message);
    }

    #[test]
    fn repeat_with_both_counters_rejected() {
        let diags = check("repeat: x\nnum_iterations: 2\nuntil: ${true}\n");
        assert_eq!(diags.len(), 1);
    }

    #[test]
    fn reserved_context_name_rejected() {
        let diags = check("def: context\ndata: 1\n");
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("reserved"));
    }

    #[test]
    fn chatbot_shape_is_valid() {
        let text = r#"
- read:
  message: "What is your query?\n"
  contribute: [context]
- repeat:
    text:
    - model: "scripted:chat"
      parameters:
        stop: ["\n\n"]
    - def: question
      read:
      message: |
        Enter a query or say "quit" to exit.
      contribute: [context]
  until: ${ question == "quit" }
"#;
        let diags = check(text);
        assert!(diags.is_empty(), "{diags:?}");
    }
}
