//! The template-expression sublanguage: `${...}` expressions embedded in
//! string scalars, with interpolation and a small filter set.
//!
//! Only expressions are supported, never statement tags: `{%` in a template
//! is a parse error. A literal `${` is written `\${`.

mod eval;
mod syntax;

pub use eval::{eval_condition, eval_expr, eval_expr_tree, truthiness, values_equal};
pub use syntax::{parse_expression, BinOp, Expr, UnaryOp};

use crate::ast::{Number, Value};
use crate::json;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExprError {
    #[error("undefined variable '{0}'")]
    Undefined(String),
    #[error("type mismatch: cannot apply '{op}' to {left} and {right}")]
    TypeMismatch { op: String, left: String, right: String },
    #[error("unknown filter '{0}'")]
    UnknownFilter(String),
    #[error("unserializable value")]
    Unserializable,
    #[error("{0}")]
    Other(String),
}

/// One piece of an interpolated string.
#[derive(Debug, Clone, PartialEq)]
pub enum Segment {
    Lit(String),
    Expr(Expr),
}

/// A parsed expression position: either a plain literal (string without
/// templates, number, bool) or a templated string.
///
/// A templated string that is exactly one `${...}` evaluates to the
/// expression's value with full type fidelity; any other mix of literal text
/// and expressions evaluates to a string.
#[derive(Debug, Clone, PartialEq)]
pub enum TemplateExpr {
    Literal(Value),
    Template { raw: String, segments: Vec<Segment> },
}

impl TemplateExpr {
    /// Parse a string scalar, detecting `${...}` expressions.
    pub fn parse(raw: &str) -> Result<TemplateExpr, String> {
        let segments = scan_template(raw)?;
        let escaped = raw.contains("\\${");
        let has_expr = segments.iter().any(|s| matches!(s, Segment::Expr(_)));
        if !has_expr && !escaped {
            return Ok(TemplateExpr::Literal(Value::Str(raw.to_string())));
        }
        Ok(TemplateExpr::Template { raw: raw.to_string(), segments })
    }

    pub fn literal(value: Value) -> TemplateExpr {
        TemplateExpr::Literal(value)
    }

    pub fn literal_str(s: impl Into<String>) -> TemplateExpr {
        TemplateExpr::Literal(Value::Str(s.into()))
    }

    /// The expression, if this is exactly one `${...}` with nothing around it.
    pub fn as_pure(&self) -> Option<&Expr> {
        match self {
            TemplateExpr::Template { segments, .. } => match segments.as_slice() {
                [Segment::Expr(e)] => Some(e),
                _ => None,
            },
            TemplateExpr::Literal(_) => None,
        }
    }

    /// The variable name, if this is exactly `${x}` for a plain variable.
    /// Such leaves read both the value and the stored contribution of the
    /// binding (the environment-lookup form).
    pub fn as_bare_var(&self) -> Option<&str> {
        match self.as_pure() {
            Some(Expr::Var(name)) => Some(name),
            _ => None,
        }
    }

    /// The source form of this expression position, for serialization: the
    /// raw string for templates, the scalar for literals.
    pub fn source_value(&self) -> Value {
        match self {
            TemplateExpr::Literal(v) => v.clone(),
            TemplateExpr::Template { raw, .. } => Value::Str(raw.clone()),
        }
    }
}

/// Split a string into literal and expression segments.
///
/// Tracks quotes and nested braces inside `${...}` so expressions may contain
/// dict literals and strings with braces.
fn scan_template(raw: &str) -> Result<Vec<Segment>, String> {
    let mut segments = Vec::new();
    let mut lit = String::new();
    let chars: Vec<char> = raw.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        if chars[i] == '\\' && chars.get(i + 1) == Some(&'$') && chars.get(i + 2) == Some(&'{') {
            lit.push_str("${");
            i += 3;
            continue;
        }
        if chars[i] == '{' && matches!(chars.get(i + 1), Some('%')) {
            return Err(
                "Jinja statement tags ('{%') are not supported; use PDL's own if: and for: blocks"
                    .to_string(),
            );
        }
        if chars[i] == '$' && matches!(chars.get(i + 1), Some('{')) {
            let (expr_src, next) = scan_expression_body(&chars, i + 2)?;
            if !lit.is_empty() {
                segments.push(Segment::Lit(std::mem::take(&mut lit)));
            }
            let expr = parse_expression(&expr_src)
                .map_err(|e| format!("invalid expression '${{{expr_src}}}': {e}"))?;
            segments.push(Segment::Expr(expr));
            i = next;
            continue;
        }
        lit.push(chars[i]);
        i += 1;
    }
    if !lit.is_empty() {
        segments.push(Segment::Lit(lit));
    }
    Ok(segments)
}

/// Scan from just after `${` to the matching `}`, respecting quotes and
/// nested braces. Returns the expression source and the index after `}`.
fn scan_expression_body(chars: &[char], start: usize) -> Result<(String, usize), String> {
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut src = String::new();
    let mut i = start;
    while i < chars.len() {
        let c = chars[i];
        match quote {
            Some(q) => {
                src.push(c);
                if c == '\\' && i + 1 < chars.len() {
                    src.push(chars[i + 1]);
                    i += 2;
                    continue;
                }
                if c == q {
                    quote = None;
                }
            }
            None => match c {
                '\'' | '"' => {
                    quote = Some(c);
                    src.push(c);
                }
                '{' => {
                    depth += 1;
                    src.push(c);
                }
                '}' => {
                    if depth == 0 {
                        return Ok((src, i + 1));
                    }
                    depth -= 1;
                    src.push(c);
                }
                c => src.push(c),
            },
        }
        i += 1;
    }
    Err("unterminated '${' expression".to_string())
}

/// Render a value as prompt text: strings verbatim, booleans as
/// `true`/`false`, null as the empty string, numbers in shortest exact form,
/// arrays and objects as compact JSON.
pub fn stringify(v: &Value) -> Result<String, ExprError> {
    match v {
        Value::Str(s) => Ok(s.clone()),
        Value::Bool(true) => Ok("true".to_string()),
        Value::Bool(false) => Ok("false".to_string()),
        Value::Null => Ok(String::new()),
        Value::Num(n) => render_num(*n),
        Value::Array(_) | Value::Object(_) => json::to_json(v).map_err(|e| match e {
            json::JsonError::Unserializable => ExprError::Unserializable,
            other => ExprError::Other(other.to_string()),
        }),
        Value::Closure(_) => Err(ExprError::Unserializable),
    }
}

fn render_num(n: Number) -> Result<String, ExprError> {
    json::render_number(n).map_err(|e| ExprError::Other(e.to_string()))
}
