//! Reference semantics: an independent, line-by-line transcription of the
//! big-step inference rules over the string fragment of the language, used
//! as an oracle for differential testing of the evaluator.
//!
//! Everything here is deliberately separate from the evaluator: its own
//! value universe, its own environment shape (plain `(value, string)` pairs,
//! the context as a string), its own expression and truthiness code. The two
//! implementations share only the AST types, so agreement between them is
//! evidence rather than tautology.
//!
//! The fragment covers: expression leaves, blocks with def/defs/contribute,
//! lists, lastOf, if, repeat, repeat-until (appendix polarity), environment
//! lookup, data, function/call, and model/code backed by injected pure
//! functions. Programs outside the fragment are rejected.

pub mod genprog;

use std::sync::Arc;

use crate::ast::{Block, BlockBody, JoinMode, JoinSpec, Number, Program, Value};
use crate::expr::{BinOp, Expr, Segment, TemplateExpr, UnaryOp};

pub const CONTEXT: &str = "context";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{0}")]
pub struct RefError(pub String);

fn unsupported(what: &str) -> RefError {
    RefError(format!("unsupported by oracle: {what}"))
}

/// The oracle's value universe.
#[derive(Debug, Clone, PartialEq)]
pub enum RefValue {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Arr(Vec<RefValue>),
    Obj(Vec<(String, RefValue)>),
    Closure(RefClosure),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RefClosure {
    pub params: Vec<String>,
    pub body: Program,
    pub env: RefEnv,
}

/// The environment exactly as the rules write it: an ordered map from names
/// to (value, string) pairs. The context entry holds the same string in both
/// components.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RefEnv {
    entries: Vec<(String, (RefValue, String))>,
}

impl RefEnv {
    pub fn initial(context: &str) -> RefEnv {
        let mut env = RefEnv::default();
        env.bind(CONTEXT, (RefValue::Str(context.to_string()), context.to_string()));
        env
    }

    pub fn lookup(&self, name: &str) -> Option<&(RefValue, String)> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, p)| p)
    }

    pub fn bind(&mut self, name: &str, pair: (RefValue, String)) {
        match self.entries.iter_mut().find(|(n, _)| n == name) {
            Some((_, slot)) => *slot = pair,
            None => self.entries.push((name.to_string(), pair)),
        }
    }

    pub fn context_string(&self) -> String {
        match self.lookup(CONTEXT) {
            Some((_, s)) => s.clone(),
            None => String::new(),
        }
    }

    fn with_context(&self, ctx: String) -> RefEnv {
        let mut env = self.clone();
        env.bind(CONTEXT, (RefValue::Str(ctx.clone()), ctx));
        env
    }

    pub fn iter(&self) -> impl Iterator<Item = &(String, (RefValue, String))> {
        self.entries.iter()
    }
}

/// A pure `prompt -> completion` stand-in for the model function.
pub type ModelHook = Arc<dyn Fn(&str) -> String + Send + Sync>;
/// A pure `(lang, source) -> value` stand-in for code execution.
pub type CodeHook = Arc<dyn Fn(&str, &str) -> String + Send + Sync>;

/// The injected pure functions standing in for model calls (`m(s) = v`) and
/// code execution (`s ⇓lang v`).
#[derive(Clone)]
pub struct RefHooks {
    pub model: ModelHook,
    pub code: CodeHook,
}

impl RefHooks {
    /// Deterministic hooks used across the conformance and differential
    /// suites; the evaluator side wraps the same closures.
    pub fn test_hooks() -> RefHooks {
        RefHooks {
            model: Arc::new(|prompt: &str| {
                let tail: String =
                    prompt.chars().rev().take(12).collect::<Vec<_>>().into_iter().rev().collect();
                format!("M[{}|{tail}]", prompt.chars().count())
            }),
            code: Arc::new(|lang: &str, source: &str| format!("C<{lang}>({source})")),
        }
    }
}

type RefTriple = (RefEnv, RefValue, String);
type RefResult = Result<RefTriple, RefError>;

/// The program judgment: a block, or the empty / singleton / cons array
/// rules with the context update `ctx = S(context) + s1`.
pub fn ref_eval_program(env: RefEnv, p: &Program, hooks: &RefHooks) -> RefResult {
    match p {
        Program::Single(block) => ref_eval_block(env, block, hooks),
        Program::List(blocks) => match blocks.split_first() {
            None => Ok((env, RefValue::Arr(vec![]), String::new())),
            Some((first, rest)) => {
                let (s1_env, v1, s1) = ref_eval_block(env.clone(), first, hooks)?;
                if rest.is_empty() {
                    return Ok((s1_env, RefValue::Arr(vec![v1]), s1));
                }
                let ctx = format!("{}{}", env.context_string(), s1);
                let threaded = s1_env.with_context(ctx);
                let (env_out, vs, s) =
                    ref_eval_program(threaded, &Program::List(rest.to_vec()), hooks)?;
                let mut values = vec![v1];
                match vs {
                    RefValue::Arr(tail) => values.extend(tail),
                    _ => return Err(RefError("internal: list tail must be an array".to_string())),
                }
                Ok((env_out, RefValue::Arr(values), format!("{s1}{s}")))
            }
        },
    }
}

/// The block rules: defs evaluate left to right with their environment
/// changes discarded, then the body, then def binding and the contribute
/// flags (a false context flag empties the string, a false result flag
/// empties the value; the binding keeps the true pair).
fn ref_eval_block(env: RefEnv, block: &Block, hooks: &RefHooks) -> RefResult {
    if block.parser.is_some() || block.spec.is_some() || block.role.is_some() {
        return Err(unsupported("parser/spec/role"));
    }
    let mut env = env;
    for (name, program) in &block.defs {
        let (_, v_x, s_x) = ref_eval_program(env.clone(), program, hooks)?;
        env.bind(name, (v_x, s_x));
    }

    let (mut env_out, v, s) = ref_eval_body(env, &block.body, hooks)?;

    if let Some(name) = &block.def {
        env_out.bind(name, (v.clone(), s.clone()));
    }
    let s_out = if block.contribute.context { s } else { String::new() };
    let v_out = if block.contribute.result { v } else { RefValue::Str(String::new()) };
    Ok((env_out, v_out, s_out))
}

fn ref_eval_body(env: RefEnv, body: &BlockBody, hooks: &RefHooks) -> RefResult {
    match body {
        BlockBody::Expr(te) => {
            // A bare ${x} is the lookup rule: S(x) = (v, s).
            if let Some(name) = te.as_bare_var() {
                let (v, s) = env
                    .lookup(name)
                    .ok_or_else(|| RefError(format!("undefined variable '{name}'")))?
                    .clone();
                return Ok((env, v, s));
            }
            let v = ref_eval_template(&env, te)?;
            let s = ref_stringify(&v)?;
            Ok((env, v, s))
        }
        BlockBody::Data { value, raw } => {
            let v = if *raw { ref_convert(value)? } else { ref_expand_data(&env, value)? };
            let s = ref_stringify(&v)?;
            Ok((env, v, s))
        }
        BlockBody::Model { model, input, parameters } => {
            if parameters.is_some() {
                return Err(unsupported("model parameters"));
            }
            let RefValue::Str(_) = ref_eval_template(&env, model)? else {
                return Err(RefError("model id must be a string".to_string()));
            };
            // Premise ⟨S, doc⟩ ⇓ ⟨S', _, s⟩ with S' discarded; without input
            // the prompt is the context string.
            let prompt = match input {
                Some(program) => ref_eval_program(env.clone(), program, hooks)?.2,
                None => env.context_string(),
            };
            let v = RefValue::Str((hooks.model)(&prompt));
            let s = ref_stringify(&v)?;
            Ok((env, v, s))
        }
        BlockBody::Code { source, lang } => {
            let source_text = ref_eval_program(env.clone(), source, hooks)?.2;
            let v = RefValue::Str((hooks.code)(lang, &source_text));
            let s = ref_stringify(&v)?;
            Ok((env, v, s))
        }
        BlockBody::LastOf(p) => {
            let (env_out, v, s) = ref_eval_program(env, p, hooks)?;
            let v = match (p, v) {
                (Program::List(_), RefValue::Arr(items)) => {
                    items.into_iter().next_back().unwrap_or_else(|| RefValue::Str(String::new()))
                }
                (_, v) => v,
            };
            Ok((env_out, v, s))
        }
        BlockBody::If { condition, then, otherwise } => {
            if ref_truthy(&ref_eval_template(&env, condition)?) {
                ref_eval_program(env, then, hooks)
            } else {
                match otherwise {
                    Some(p) => ref_eval_program(env, p, hooks),
                    None => Ok((env, RefValue::Str(String::new()), String::new())),
                }
            }
        }
        BlockBody::Repeat { body, count, join } => {
            let n = match ref_eval_template(&env, count)? {
                RefValue::Int(i) => i,
                _ => return Err(RefError("repeat count must be an integer".to_string())),
            };
            let total = n.max(1);
            let mut env = env;
            let mut values = Vec::new();
            let mut strings = Vec::new();
            for i in 0..total {
                let entry_ctx = env.context_string();
                let (env_next, v, s) = ref_eval_program(env, body, hooks)?;
                env = env_next;
                if i + 1 < total {
                    env = env.with_context(format!("{entry_ctx}{s}"));
                }
                values.push(v);
                strings.push(s);
            }
            ref_join(env, values, strings, join)
        }
        BlockBody::RepeatUntil { body, until, join } => {
            // The literal rules: continue while the condition is true, stop
            // when it is false.
            let mut env = env;
            let mut values = Vec::new();
            let mut strings = Vec::new();
            let mut guard = 0;
            loop {
                guard += 1;
                if guard > 100_000 {
                    return Err(RefError("oracle iteration guard exceeded".to_string()));
                }
                let entry_ctx = env.context_string();
                let (env_next, v, s) = ref_eval_program(env, body, hooks)?;
                env = env_next;
                values.push(v);
                strings.push(s.clone());
                if ref_truthy(&ref_eval_template(&env, until)?) {
                    env = env.with_context(format!("{entry_ctx}{s}"));
                } else {
                    break;
                }
            }
            ref_join(env, values, strings, join)
        }
        BlockBody::Function { params, body } => {
            if params.values().any(|t| t.is_some()) {
                return Err(unsupported("typed parameters"));
            }
            let closure = RefClosure {
                params: params.keys().cloned().collect(),
                body: body.clone(),
                env: env.clone(),
            };
            Ok((env, RefValue::Closure(closure), String::new()))
        }
        BlockBody::Call { func, args, context } => {
            if context.is_some() {
                return Err(unsupported("pdl_context"));
            }
            let RefValue::Closure(closure) = ref_eval_template(&env, func)? else {
                return Err(RefError("call target is not a closure".to_string()));
            };
            // S'[context ← S(context)] + args
            let mut callee = closure.env.with_context(env.context_string());
            for name in &closure.params {
                let te =
                    args.get(name).ok_or_else(|| RefError(format!("missing argument '{name}'")))?;
                let v = ref_eval_template(&env, te)?;
                let s = ref_stringify(&v).unwrap_or_default();
                callee.bind(name, (v, s));
            }
            if args.len() != closure.params.len() {
                return Err(RefError("extra arguments".to_string()));
            }
            let (_, v, s) = ref_eval_program(callee, &closure.body, hooks)?;
            Ok((env, v, s))
        }
        BlockBody::Read { .. }
        | BlockBody::Text(_)
        | BlockBody::Array(_)
        | BlockBody::Object(_)
        | BlockBody::For { .. }
        | BlockBody::Include { .. } => Err(unsupported(body.kind_name())),
    }
}

fn ref_join(
    env: RefEnv,
    values: Vec<RefValue>,
    strings: Vec<String>,
    join: &JoinSpec,
) -> RefResult {
    match join.mode {
        JoinMode::LastOf => {
            let v = values.into_iter().next_back().expect("at least one iteration");
            let s = strings.into_iter().next_back().expect("at least one iteration");
            Ok((env, v, s))
        }
        JoinMode::Text => {
            let sep = join.with.clone().unwrap_or_default();
            let parts = values.iter().map(ref_stringify).collect::<Result<Vec<_>, _>>()?;
            let text = parts.join(&sep);
            Ok((env, RefValue::Str(text.clone()), text))
        }
        JoinMode::Array => {
            let v = RefValue::Arr(values);
            let s = ref_stringify(&v)?;
            Ok((env, v, s))
        }
    }
}

// --- the oracle's own expression layer -----------------------------------

fn ref_convert(v: &Value) -> Result<RefValue, RefError> {
    Ok(match v {
        Value::Null => RefValue::Null,
        Value::Bool(b) => RefValue::Bool(*b),
        Value::Num(Number::Int(i)) => RefValue::Int(*i),
        Value::Num(Number::Float(f)) => RefValue::Float(*f),
        Value::Str(s) => RefValue::Str(s.clone()),
        Value::Array(items) => {
            RefValue::Arr(items.iter().map(ref_convert).collect::<Result<_, _>>()?)
        }
        Value::Object(fields) => RefValue::Obj(
            fields
                .iter()
                .map(|(k, v)| Ok((k.clone(), ref_convert(v)?)))
                .collect::<Result<_, RefError>>()?,
        ),
        Value::Closure(_) => return Err(unsupported("closure literal")),
    })
}

fn ref_expand_data(env: &RefEnv, v: &Value) -> Result<RefValue, RefError> {
    Ok(match v {
        Value::Str(s) => {
            let te = TemplateExpr::parse(s).map_err(RefError)?;
            ref_eval_template(env, &te)?
        }
        Value::Array(items) => {
            RefValue::Arr(items.iter().map(|i| ref_expand_data(env, i)).collect::<Result<_, _>>()?)
        }
        Value::Object(fields) => RefValue::Obj(
            fields
                .iter()
                .map(|(k, v)| Ok((k.clone(), ref_expand_data(env, v)?)))
                .collect::<Result<_, RefError>>()?,
        ),
        scalar => ref_convert(scalar)?,
    })
}

fn ref_eval_template(env: &RefEnv, te: &TemplateExpr) -> Result<RefValue, RefError> {
    match te {
        TemplateExpr::Literal(v) => ref_convert(v),
        TemplateExpr::Template { segments, .. } => {
            if let [Segment::Expr(e)] = segments.as_slice() {
                return ref_eval_expr(env, e);
            }
            let mut out = String::new();
            for seg in segments {
                match seg {
                    Segment::Lit(s) => out.push_str(s),
                    Segment::Expr(e) => out.push_str(&ref_stringify(&ref_eval_expr(env, e)?)?),
                }
            }
            Ok(RefValue::Str(out))
        }
    }
}

fn ref_eval_expr(env: &RefEnv, e: &Expr) -> Result<RefValue, RefError> {
    match e {
        Expr::Lit(v) => ref_convert(v),
        Expr::Var(name) => env
            .lookup(name)
            .map(|(v, _)| v.clone())
            .ok_or_else(|| RefError(format!("undefined variable '{name}'"))),
        Expr::Unary(UnaryOp::Not, inner) => {
            Ok(RefValue::Bool(!ref_truthy(&ref_eval_expr(env, inner)?)))
        }
        Expr::Unary(UnaryOp::Neg, inner) => match ref_eval_expr(env, inner)? {
            RefValue::Int(i) => Ok(RefValue::Int(-i)),
            RefValue::Float(f) => Ok(RefValue::Float(-f)),
            _ => Err(unsupported("negation of non-number")),
        },
        Expr::Binary(BinOp::And, l, r) => {
            let lv = ref_eval_expr(env, l)?;
            if ref_truthy(&lv) {
                ref_eval_expr(env, r)
            } else {
                Ok(lv)
            }
        }
        Expr::Binary(BinOp::Or, l, r) => {
            let lv = ref_eval_expr(env, l)?;
            if ref_truthy(&lv) {
                Ok(lv)
            } else {
                ref_eval_expr(env, r)
            }
        }
        Expr::Binary(op, l, r) => {
            let lv = ref_eval_expr(env, l)?;
            let rv = ref_eval_expr(env, r)?;
            ref_binop(*op, &lv, &rv)
        }
        _ => Err(unsupported("expression form outside the oracle family")),
    }
}

fn ref_num(v: &RefValue) -> Option<f64> {
    match v {
        RefValue::Int(i) => Some(*i as f64),
        RefValue::Float(f) => Some(*f),
        _ => None,
    }
}

fn ref_equal(l: &RefValue, r: &RefValue) -> bool {
    match (ref_num(l), ref_num(r)) {
        (Some(a), Some(b)) => a == b,
        _ => match (l, r) {
            (RefValue::Arr(a), RefValue::Arr(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| ref_equal(x, y))
            }
            (RefValue::Obj(a), RefValue::Obj(b)) => {
                a.len() == b.len()
                    && a.iter().all(|(k, v)| {
                        b.iter().find(|(bk, _)| bk == k).is_some_and(|(_, w)| ref_equal(v, w))
                    })
            }
            (a, b) => a == b,
        },
    }
}

fn ref_binop(op: BinOp, l: &RefValue, r: &RefValue) -> Result<RefValue, RefError> {
    use RefValue::*;
    Ok(match op {
        BinOp::Eq => Bool(ref_equal(l, r)),
        BinOp::Ne => Bool(!ref_equal(l, r)),
        BinOp::Add => match (l, r) {
            (Int(a), Int(b)) => Int(a.wrapping_add(*b)),
            (Str(a), Str(b)) => Str(format!("{a}{b}")),
            _ => return Err(unsupported("addition outside the oracle family")),
        },
        BinOp::Sub => match (l, r) {
            (Int(a), Int(b)) => Int(a.wrapping_sub(*b)),
            _ => return Err(unsupported("subtraction outside the oracle family")),
        },
        BinOp::Mul => match (l, r) {
            (Int(a), Int(b)) => Int(a.wrapping_mul(*b)),
            _ => return Err(unsupported("multiplication outside the oracle family")),
        },
        BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
            let ord = match (l, r) {
                (Int(a), Int(b)) => a.cmp(b),
                (Str(a), Str(b)) => a.cmp(b),
                _ => return Err(unsupported("comparison outside the oracle family")),
            };
            Bool(match op {
                BinOp::Lt => ord.is_lt(),
                BinOp::Le => ord.is_le(),
                BinOp::Gt => ord.is_gt(),
                _ => ord.is_ge(),
            })
        }
        _ => return Err(unsupported("operator outside the oracle family")),
    })
}

fn ref_truthy(v: &RefValue) -> bool {
    match v {
        RefValue::Bool(b) => *b,
        RefValue::Null => false,
        RefValue::Int(i) => *i != 0,
        RefValue::Float(f) => *f != 0.0,
        RefValue::Str(s) => !s.is_empty(),
        RefValue::Arr(items) => !items.is_empty(),
        RefValue::Obj(fields) => !fields.is_empty(),
        RefValue::Closure(_) => true,
    }
}

/// The oracle's own `str(v)`: strings verbatim, null empty, booleans
/// lowercase, numbers in shortest form, containers as JSON with `", "` and
/// `": "` separators.
pub fn ref_stringify(v: &RefValue) -> Result<String, RefError> {
    fn json(v: &RefValue, out: &mut String) -> Result<(), RefError> {
        match v {
            RefValue::Null => out.push_str("null"),
            RefValue::Bool(true) => out.push_str("true"),
            RefValue::Bool(false) => out.push_str("false"),
            RefValue::Int(i) => out.push_str(&i.to_string()),
            RefValue::Float(f) => out.push_str(&format!("{f:?}")),
            RefValue::Str(s) => {
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
            RefValue::Arr(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    json(item, out)?;
                }
                out.push(']');
            }
            RefValue::Obj(fields) => {
                out.push('{');
                for (i, (k, item)) in fields.iter().enumerate() {
                    if i > 0 {
                        out.push_str(", ");
                    }
                    json(&RefValue::Str(k.clone()), out)?;
                    out.push_str(": ");
                    json(item, out)?;
                }
                out.push('}');
            }
            RefValue::Closure(_) => return Err(RefError("unserializable value".to_string())),
        }
        Ok(())
    }

    Ok(match v {
        RefValue::Str(s) => s.clone(),
        RefValue::Null => String::new(),
        RefValue::Bool(true) => "true".to_string(),
        RefValue::Bool(false) => "false".to_string(),
        RefValue::Int(i) => i.to_string(),
        RefValue::Float(f) => format!("{f:?}"),
        container => {
            let mut out = String::new();
            json(container, &mut out)?;
            out
        }
    })
}

// --- agreement checks used by the differential and conformance suites -----

/// Structural agreement between an evaluator value and an oracle value.
pub fn values_agree(v: &Value, r: &RefValue) -> bool {
    match (v, r) {
        (Value::Null, RefValue::Null) => true,
        (Value::Bool(a), RefValue::Bool(b)) => a == b,
        (Value::Num(Number::Int(a)), RefValue::Int(b)) => a == b,
        (Value::Num(Number::Float(a)), RefValue::Float(b)) => a == b || (a.is_nan() && b.is_nan()),
        (Value::Str(a), RefValue::Str(b)) => a == b,
        (Value::Array(a), RefValue::Arr(b)) => {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| values_agree(x, y))
        }
        (Value::Object(a), RefValue::Obj(b)) => {
            a.len() == b.len()
                && a.iter().zip(b).all(|((ak, av), (bk, bv))| ak == bk && values_agree(av, bv))
        }
        (Value::Closure(c), RefValue::Closure(rc)) => {
            c.params.keys().cloned().collect::<Vec<_>>() == rc.params
                && c.body == rc.body
                && env_agrees(&c.captured, &rc.env).is_ok()
        }
        _ => false,
    }
}

/// Agreement between an evaluator environment and an oracle environment:
/// same names in the same order, agreeing values, and each stored
/// contribution flattening to the oracle's stored string.
pub fn env_agrees(env: &crate::ast::Environment, renv: &RefEnv) -> Result<(), String> {
    let eval_names: Vec<&str> = env.names().collect();
    let ref_names: Vec<&str> = renv.iter().map(|(n, _)| n.as_str()).collect();
    if eval_names != ref_names {
        return Err(format!("binding names differ: eval {eval_names:?} vs oracle {ref_names:?}"));
    }
    for (name, (rv, rs)) in renv.iter() {
        let binding = env.lookup(name).expect("name checked above");
        if !values_agree(&binding.value, rv) {
            return Err(format!(
                "value of '{name}' differs: eval {:?} vs oracle {rv:?}",
                binding.value
            ));
        }
        let flat = binding.contribution.flatten();
        if &flat != rs {
            return Err(format!(
                "stored string of '{name}' differs: eval {flat:?} vs oracle {rs:?}"
            ));
        }
    }
    Ok(())
}

/// Full-triple agreement: environment, value, and flattened contribution.
pub fn outcomes_agree(
    eval_env: &crate::ast::Environment,
    eval_value: &Value,
    eval_contribution: &crate::ast::Contribution,
    oracle: &RefTriple,
) -> Result<(), String> {
    let (ref_env, ref_value, ref_string) = oracle;
    env_agrees(eval_env, ref_env)?;
    if !values_agree(eval_value, ref_value) {
        return Err(format!("result value differs: eval {eval_value:?} vs oracle {ref_value:?}"));
    }
    let flat = eval_contribution.flatten();
    if &flat != ref_string {
        return Err(format!("contribution differs: eval {flat:?} vs oracle {ref_string:?}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ast::Block;
    use crate::expr::TemplateExpr;

    fn leaf(s: &str) -> Block {
        Block::leaf(BlockBody::Expr(TemplateExpr::literal_str(s)))
    }

    #[test]
    fn string_rule() {
        let (env, v, s) = ref_eval_program(
            RefEnv::initial(""),
            &Program::single(leaf("s")),
            &RefHooks::test_hooks(),
        )
        .unwrap();
        assert_eq!(v, RefValue::Str("s".to_string()));
        assert_eq!(s, "s");
        assert_eq!(env.context_string(), "");
    }

    #[test]
    fn cons_rule_grows_context_internally() {
        let p = Program::List(vec![leaf("a"), leaf("b")]);
        let (env, v, s) =
            ref_eval_program(RefEnv::initial(""), &p, &RefHooks::test_hooks()).unwrap();
        assert_eq!(v, RefValue::Arr(vec![RefValue::Str("a".into()), RefValue::Str("b".into())]));
        assert_eq!(s, "ab");
        // The cons rule appended the head's contribution before the tail ran.
        assert_eq!(env.context_string(), "a");
    }

    #[test]
    fn function_and_call() {
        let func = Block {
            def: Some("f".to_string()),
            ..Block::leaf(BlockBody::Function {
                params: [("x".to_string(), None)].into_iter().collect(),
                body: Program::single(leaf_template("${x}")),
            })
        };
        let call = Block::leaf(BlockBody::Call {
            func: TemplateExpr::parse("${f}").unwrap(),
            args: [("x".to_string(), TemplateExpr::literal_str("hi"))].into_iter().collect(),
            context: None,
        });
        let p = Program::List(vec![func, call]);
        let (env, v, s) =
            ref_eval_program(RefEnv::initial(""), &p, &RefHooks::test_hooks()).unwrap();
        let RefValue::Arr(items) = v else { panic!() };
        assert_eq!(items[1], RefValue::Str("hi".to_string()));
        assert_eq!(s, "hi");
        // The call rule returns the caller environment: x stays unbound.
        assert!(env.lookup("x").is_none());
    }

    fn leaf_template(s: &str) -> Block {
        Block::leaf(BlockBody::Expr(TemplateExpr::parse(s).unwrap()))
    }

    #[test]
    fn outside_fragment_is_rejected() {
        let p = Program::single(Block::leaf(BlockBody::Read {
            file: None,
            message: None,
            multiline: false,
        }));
        let err = ref_eval_program(RefEnv::initial(""), &p, &RefHooks::test_hooks()).unwrap_err();
        assert!(err.0.contains("unsupported by oracle"));
    }
}
