//! Expression evaluation. Pure: never mutates the environment.

use indexmap::IndexMap;

use crate::ast::{Environment, Number, Value};
use crate::json;

use super::syntax::{BinOp, Expr, UnaryOp};
use super::{ExprError, Segment, TemplateExpr};

/// Evaluate an expression position against an environment.
///
/// A pure `${...}` yields the expression's value with full type fidelity; an
/// interpolation yields a string with each expression replaced by
/// [`super::stringify`] of its value; a literal yields itself.
pub fn eval_expr(env: &Environment, e: &TemplateExpr) -> Result<Value, ExprError> {
    match e {
        TemplateExpr::Literal(v) => Ok(v.clone()),
        TemplateExpr::Template { segments, .. } => {
            if let [Segment::Expr(expr)] = segments.as_slice() {
                return eval_expr_tree(env, expr);
            }
            let mut out = String::new();
            for seg in segments {
                match seg {
                    Segment::Lit(s) => out.push_str(s),
                    Segment::Expr(expr) => {
                        let v = eval_expr_tree(env, expr)?;
                        out.push_str(&super::stringify(&v)?);
                    }
                }
            }
            Ok(Value::Str(out))
        }
    }
}

/// Evaluate a condition: the expression's value put through truthiness.
pub fn eval_condition(env: &Environment, e: &TemplateExpr) -> Result<bool, ExprError> {
    Ok(truthiness(&eval_expr(env, e)?))
}

/// false, null, 0, "", and empty containers are false; everything else is
/// true; booleans pass through.
pub fn truthiness(v: &Value) -> bool {
    match v {
        Value::Bool(b) => *b,
        Value::Null => false,
        Value::Num(Number::Int(i)) => *i != 0,
        Value::Num(Number::Float(f)) => *f != 0.0,
        Value::Str(s) => !s.is_empty(),
        Value::Array(items) => !items.is_empty(),
        Value::Object(fields) => !fields.is_empty(),
        Value::Closure(_) => true,
    }
}

pub fn eval_expr_tree(env: &Environment, expr: &Expr) -> Result<Value, ExprError> {
    match expr {
        Expr::Lit(v) => Ok(v.clone()),
        Expr::Var(name) => match env.lookup(name) {
            Some(b) => Ok(b.value.clone()),
            None => Err(ExprError::Undefined(name.clone())),
        },
        Expr::Field(base, name) => {
            let base = eval_expr_tree(env, base)?;
            match base {
                Value::Object(fields) => fields
                    .get(name)
                    .cloned()
                    .ok_or_else(|| ExprError::Other(format!("object has no field '{name}'"))),
                other => Err(ExprError::TypeMismatch {
                    op: format!(".{name}"),
                    left: other.type_name().to_string(),
                    right: "field access".to_string(),
                }),
            }
        }
        Expr::Index(base, idx) => {
            let base = eval_expr_tree(env, base)?;
            let idx = eval_expr_tree(env, idx)?;
            index_value(&base, &idx)
        }
        Expr::Unary(UnaryOp::Not, inner) => {
            Ok(Value::Bool(!truthiness(&eval_expr_tree(env, inner)?)))
        }
        Expr::Unary(UnaryOp::Neg, inner) => match eval_expr_tree(env, inner)? {
            Value::Num(Number::Int(i)) => i
                .checked_neg()
                .map(Value::int)
                .ok_or_else(|| ExprError::Other("integer overflow".to_string())),
            Value::Num(Number::Float(f)) => Ok(Value::float(-f)),
            other => Err(ExprError::TypeMismatch {
                op: "-".to_string(),
                left: "number".to_string(),
                right: other.type_name().to_string(),
            }),
        },
        Expr::Binary(BinOp::And, l, r) => {
            let lv = eval_expr_tree(env, l)?;
            if truthiness(&lv) {
                eval_expr_tree(env, r)
            } else {
                Ok(lv)
            }
        }
        Expr::Binary(BinOp::Or, l, r) => {
            let lv = eval_expr_tree(env, l)?;
            if truthiness(&lv) {
                Ok(lv)
            } else {
                eval_expr_tree(env, r)
            }
        }
        Expr::Binary(op, l, r) => {
            let lv = eval_expr_tree(env, l)?;
            let rv = eval_expr_tree(env, r)?;
            eval_binop(*op, &lv, &rv)
        }
        Expr::Cond { then, cond, otherwise } => {
            if truthiness(&eval_expr_tree(env, cond)?) {
                eval_expr_tree(env, then)
            } else {
                eval_expr_tree(env, otherwise)
            }
        }
        Expr::List(items) => {
            let values = items.iter().map(|e| eval_expr_tree(env, e)).collect::<Result<_, _>>()?;
            Ok(Value::Array(values))
        }
        Expr::Dict(pairs) => {
            let mut map = IndexMap::new();
            for (k, v) in pairs {
                let key = match eval_expr_tree(env, k)? {
                    Value::Str(s) => s,
                    other => {
                        return Err(ExprError::Other(format!(
                            "dict keys must be strings, found {}",
                            other.type_name()
                        )))
                    }
                };
                map.insert(key, eval_expr_tree(env, v)?);
            }
            Ok(Value::Object(map))
        }
        Expr::Filter { expr, name, args } => {
            let v = eval_expr_tree(env, expr)?;
            let args =
                args.iter().map(|a| eval_expr_tree(env, a)).collect::<Result<Vec<_>, _>>()?;
            apply_filter(name, &v, &args)
        }
    }
}

fn index_value(base: &Value, idx: &Value) -> Result<Value, ExprError> {
    match (base, idx) {
        (Value::Array(items), Value::Num(Number::Int(i))) => {
            let len = items.len() as i64;
            let eff = if *i < 0 { i + len } else { *i };
            if eff < 0 || eff >= len {
                return Err(ExprError::Other(format!(
                    "index {i} out of range for array of length {len}"
                )));
            }
            Ok(items[eff as usize].clone())
        }
        (Value::Object(fields), Value::Str(key)) => fields
            .get(key)
            .cloned()
            .ok_or_else(|| ExprError::Other(format!("object has no field '{key}'"))),
        (Value::Str(s), Value::Num(Number::Int(i))) => {
            let chars: Vec<char> = s.chars().collect();
            let len = chars.len() as i64;
            let eff = if *i < 0 { i + len } else { *i };
            if eff < 0 || eff >= len {
                return Err(ExprError::Other(format!(
                    "index {i} out of range for string of length {len}"
                )));
            }
            Ok(Value::Str(chars[eff as usize].to_string()))
        }
        (b, i) => Err(ExprError::TypeMismatch {
            op: "[]".to_string(),
            left: b.type_name().to_string(),
            right: i.type_name().to_string(),
        }),
    }
}

fn mismatch(op: BinOp, l: &Value, r: &Value) -> ExprError {
    ExprError::TypeMismatch {
        op: op.symbol().to_string(),
        left: l.type_name().to_string(),
        right: r.type_name().to_string(),
    }
}

/// Structural equality with numeric coercion at the leaves: `1 == 1.0`.
pub fn values_equal(l: &Value, r: &Value) -> bool {
    match (l, r) {
        (Value::Num(a), Value::Num(b)) => a.as_f64() == b.as_f64(),
        (Value::Array(a), Value::Array(b)) => {
            a.len() == b.len() && a.iter().zip(b).all(|(x, y)| values_equal(x, y))
        }
        (Value::Object(a), Value::Object(b)) => {
            a.len() == b.len()
                && a.iter().all(|(k, v)| b.get(k).is_some_and(|w| values_equal(v, w)))
        }
        (a, b) => a == b,
    }
}

fn eval_binop(op: BinOp, l: &Value, r: &Value) -> Result<Value, ExprError> {
    use BinOp::*;
    match op {
        Eq => Ok(Value::Bool(values_equal(l, r))),
        Ne => Ok(Value::Bool(!values_equal(l, r))),
        Lt | Le | Gt | Ge => compare(op, l, r),
        Add => match (l, r) {
            (Value::Num(a), Value::Num(b)) => arith(op, *a, *b),
            (Value::Str(a), Value::Str(b)) => Ok(Value::Str(format!("{a}{b}"))),
            (Value::Array(a), Value::Array(b)) => {
                let mut out = a.clone();
                out.extend(b.iter().cloned());
                Ok(Value::Array(out))
            }
            _ => Err(mismatch(op, l, r)),
        },
        Sub | Mul | Div | FloorDiv | Mod => match (l, r) {
            (Value::Num(a), Value::Num(b)) => arith(op, *a, *b),
            _ => Err(mismatch(op, l, r)),
        },
        In => contains(r, l),
        NotIn => contains(r, l).map(|v| Value::Bool(!truthiness(&v))),
        And | Or => unreachable!("short-circuit operators handled by the caller"),
    }
}

fn contains(container: &Value, item: &Value) -> Result<Value, ExprError> {
    match container {
        Value::Array(items) => Ok(Value::Bool(items.iter().any(|x| values_equal(x, item)))),
        Value::Str(s) => match item {
            Value::Str(needle) => Ok(Value::Bool(s.contains(needle))),
            other => Err(ExprError::TypeMismatch {
                op: "in".to_string(),
                left: other.type_name().to_string(),
                right: "string".to_string(),
            }),
        },
        Value::Object(fields) => match item {
            Value::Str(key) => Ok(Value::Bool(fields.contains_key(key))),
            other => Err(ExprError::TypeMismatch {
                op: "in".to_string(),
                left: other.type_name().to_string(),
                right: "object".to_string(),
            }),
        },
        other => Err(ExprError::TypeMismatch {
            op: "in".to_string(),
            left: item.type_name().to_string(),
            right: other.type_name().to_string(),
        }),
    }
}

fn compare(op: BinOp, l: &Value, r: &Value) -> Result<Value, ExprError> {
    let ord = match (l, r) {
        (Value::Num(a), Value::Num(b)) => a
            .as_f64()
            .partial_cmp(&b.as_f64())
            .ok_or_else(|| ExprError::Other("cannot compare NaN".to_string()))?,
        (Value::Str(a), Value::Str(b)) => a.cmp(b),
        _ => return Err(mismatch(op, l, r)),
    };
    let b = match op {
        BinOp::Lt => ord.is_lt(),
        BinOp::Le => ord.is_le(),
        BinOp::Gt => ord.is_gt(),
        BinOp::Ge => ord.is_ge(),
        _ => unreachable!(),
    };
    Ok(Value::Bool(b))
}

/// Python-style floor division: rounds toward negative infinity.
fn floor_div_int(a: i64, b: i64) -> Result<i64, ExprError> {
    if b == 0 {
        return Err(ExprError::Other("division by zero".to_string()));
    }
    let q = a.checked_div(b).ok_or_else(|| ExprError::Other("integer overflow".to_string()))?;
    let r = a % b;
    if r != 0 && (r < 0) != (b < 0) {
        Ok(q - 1)
    } else {
        Ok(q)
    }
}

fn arith(op: BinOp, a: Number, b: Number) -> Result<Value, ExprError> {
    use Number::*;
    let overflow = || ExprError::Other("integer overflow".to_string());
    if let (Int(x), Int(y)) = (a, b) {
        match op {
            BinOp::Add => return x.checked_add(y).map(Value::int).ok_or_else(overflow),
            BinOp::Sub => return x.checked_sub(y).map(Value::int).ok_or_else(overflow),
            BinOp::Mul => return x.checked_mul(y).map(Value::int).ok_or_else(overflow),
            BinOp::FloorDiv => return floor_div_int(x, y).map(Value::int),
            BinOp::Mod => {
                let q = floor_div_int(x, y)?;
                let r = x - q * y;
                return Ok(Value::int(r));
            }
            BinOp::Div => {
                if y == 0 {
                    return Err(ExprError::Other("division by zero".to_string()));
                }
                return Ok(Value::float(x as f64 / y as f64));
            }
            _ => unreachable!(),
        }
    }
    let x = a.as_f64();
    let y = b.as_f64();
    let f = match op {
        BinOp::Add => x + y,
        BinOp::Sub => x - y,
        BinOp::Mul => x * y,
        BinOp::Div => {
            if y == 0.0 {
                return Err(ExprError::Other("division by zero".to_string()));
            }
            x / y
        }
        BinOp::FloorDiv => {
            if y == 0.0 {
                return Err(ExprError::Other("division by zero".to_string()));
            }
            (x / y).floor()
        }
        BinOp::Mod => {
            if y == 0.0 {
                return Err(ExprError::Other("division by zero".to_string()));
            }
            x - y * (x / y).floor()
        }
        _ => unreachable!(),
    };
    if f.is_nan() {
        return Err(ExprError::Other("arithmetic produced NaN".to_string()));
    }
    Ok(Value::float(f))
}

fn apply_filter(name: &str, v: &Value, args: &[Value]) -> Result<Value, ExprError> {
    let no_args = |args: &[Value]| {
        if args.is_empty() {
            Ok(())
        } else {
            Err(ExprError::Other(format!("filter '{name}' takes no arguments")))
        }
    };
    match name {
        "length" => {
            no_args(args)?;
            let n = match v {
                Value::Str(s) => s.chars().count(),
                Value::Array(items) => items.len(),
                Value::Object(fields) => fields.len(),
                other => {
                    return Err(ExprError::Other(format!(
                        "filter 'length' cannot apply to {}",
                        other.type_name()
                    )))
                }
            };
            Ok(Value::int(n as i64))
        }
        "join" => {
            let sep = match args {
                [] => String::new(),
                [Value::Str(s)] => s.clone(),
                [other] => {
                    return Err(ExprError::Other(format!(
                        "filter 'join' separator must be a string, found {}",
                        other.type_name()
                    )))
                }
                _ => {
                    return Err(ExprError::Other(
                        "filter 'join' takes at most one argument".to_string(),
                    ))
                }
            };
            match v {
                Value::Array(items) => {
                    let parts =
                        items.iter().map(super::stringify).collect::<Result<Vec<_>, _>>()?;
                    Ok(Value::Str(parts.join(&sep)))
                }
                other => Err(ExprError::Other(format!(
                    "filter 'join' cannot apply to {}",
                    other.type_name()
                ))),
            }
        }
        "trim" | "lower" | "upper" => {
            no_args(args)?;
            match v {
                Value::Str(s) => Ok(Value::Str(match name {
                    "trim" => s.trim().to_string(),
                    "lower" => s.to_lowercase(),
                    _ => s.to_uppercase(),
                })),
                other => Err(ExprError::Other(format!(
                    "filter '{name}' cannot apply to {}",
                    other.type_name()
                ))),
            }
        }
        "tojson" => {
            no_args(args)?;
            json::to_json(v).map(Value::Str).map_err(|e| match e {
                json::JsonError::Unserializable => ExprError::Unserializable,
                other => ExprError::Other(other.to_string()),
            })
        }
        _ => Err(ExprError::UnknownFilter(name.to_string())),
    }
}
