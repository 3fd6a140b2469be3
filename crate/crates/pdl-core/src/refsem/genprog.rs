//! Deterministic random generator of string-fragment programs for
//! differential testing.
//!
//! Every generated program terminates (repeat counts ≤ 4, until loops use a
//! bounded counter pattern) and stays inside the oracle's fragment: no
//! reads, text/array/object blocks, parsers, specs, or roles. Variable
//! references are only generated to names guaranteed bound, and arithmetic
//! stays small enough that overflow is impossible.

use indexmap::IndexMap;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::ast::{Block, BlockBody, ContributeSet, JoinMode, JoinSpec, Program, Value};
use crate::expr::TemplateExpr;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kind {
    Int,
    Str,
    Other,
}

#[derive(Clone, Default)]
struct Scope {
    ints: Vec<String>,
    strs: Vec<String>,
    others: Vec<String>,
    funcs: Vec<(String, Vec<(String, Kind)>)>,
}

impl Scope {
    fn add(&mut self, name: String, kind: Kind) {
        match kind {
            Kind::Int => self.ints.push(name),
            Kind::Str => self.strs.push(name),
            Kind::Other => self.others.push(name),
        }
    }

    fn any_var(&self) -> Vec<&String> {
        self.ints.iter().chain(&self.strs).chain(&self.others).collect()
    }

    /// Values safe to stringify. `others` can hold closures (a call may
    /// return one), so only the scalar-typed names qualify.
    fn printable_var(&self) -> Vec<&String> {
        self.ints.iter().chain(&self.strs).collect()
    }
}

struct Gen {
    rng: ChaCha8Rng,
    budget: i64,
    next_id: u64,
}

impl Gen {
    fn fresh(&mut self, prefix: &str) -> String {
        let id = self.next_id;
        self.next_id += 1;
        format!("{prefix}{id}")
    }

    fn spend(&mut self, n: i64) {
        self.budget -= n;
    }

    fn chance(&mut self, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    fn pick<'a, T>(&mut self, items: &'a [T]) -> &'a T {
        let i = self.rng.random_range(0..items.len());
        &items[i]
    }
}

/// Generate a deterministic pseudo-random fragment program. The same seed
/// and budget always produce the same program.
pub fn gen_fragment_programs(seed: u64, size_budget: u32) -> Program {
    let mut g = Gen {
        rng: ChaCha8Rng::seed_from_u64(seed),
        budget: i64::from(size_budget.max(1)),
        next_id: 0,
    };
    let mut scope = Scope::default();
    gen_program(&mut g, &mut scope, 0)
}

fn gen_program(g: &mut Gen, scope: &mut Scope, depth: usize) -> Program {
    if g.budget <= 1 || depth >= 4 || g.chance(0.35) {
        let (block, _) = gen_block(g, scope, depth);
        return Program::single(block);
    }
    let n = g.rng.random_range(1..=3usize);
    let mut blocks = Vec::new();
    for _ in 0..n {
        if g.budget <= 0 && !blocks.is_empty() {
            break;
        }
        // Defs and def bindings of earlier elements are visible to later
        // ones: the cons rule threads the environment.
        let (block, _) = gen_block(g, scope, depth);
        blocks.push(block);
    }
    Program::List(blocks)
}

/// A program body already in desugared normal form (single block).
fn gen_body_program(g: &mut Gen, scope: &mut Scope, depth: usize) -> Program {
    let mut inner = scope.clone();
    match gen_program(g, &mut inner, depth) {
        Program::List(blocks) => {
            Program::single(Block::leaf(BlockBody::LastOf(Program::List(blocks))))
        }
        single => single,
    }
}

fn int_literal(g: &mut Gen) -> i64 {
    g.rng.random_range(0..=9)
}

fn str_literal(g: &mut Gen) -> String {
    const WORDS: &[&str] = &["a", "bc", "def", "gh i", "j_k", "lm", "n0", "", "xyz"];
    let i = g.rng.random_range(0..WORDS.len());
    WORDS[i].to_string()
}

fn int_expr_src(g: &mut Gen, scope: &Scope) -> String {
    let lit = int_literal(g);
    match g.rng.random_range(0..4) {
        0 => format!("{lit}"),
        1 if !scope.ints.is_empty() => {
            let v = g.pick(&scope.ints).clone();
            format!("{v} + {lit}")
        }
        2 if !scope.ints.is_empty() => {
            let v = g.pick(&scope.ints).clone();
            format!("{v} - {lit}")
        }
        // Multiplication only over literals so values stay tiny.
        _ => format!("{} * {lit}", int_literal(g)),
    }
}

fn cond_src(g: &mut Gen, scope: &Scope) -> String {
    match g.rng.random_range(0..5) {
        0 => "true".to_string(),
        1 => "false".to_string(),
        2 if !scope.ints.is_empty() => {
            let v = g.pick(&scope.ints).clone();
            format!("{v} < {}", int_literal(g))
        }
        3 if !scope.strs.is_empty() => {
            let v = g.pick(&scope.strs).clone();
            format!("{v} == \"{}\"", "quit")
        }
        _ => format!("{} <= {}", int_literal(g), int_literal(g)),
    }
}

fn template(src: &str) -> TemplateExpr {
    TemplateExpr::parse(src).expect("generated template must parse")
}

fn gen_data_tree(g: &mut Gen, scope: &Scope, depth: usize) -> Value {
    match g.rng.random_range(0..6) {
        0 => Value::int(int_literal(g)),
        1 => Value::str(str_literal(g)),
        2 => Value::Bool(g.chance(0.5)),
        3 if depth < 2 => {
            let n = g.rng.random_range(0..=2);
            Value::Array((0..n).map(|_| gen_data_tree(g, scope, depth + 1)).collect())
        }
        4 if depth < 2 => {
            let n = g.rng.random_range(1..=2);
            let mut map = IndexMap::new();
            for i in 0..n {
                map.insert(format!("k{i}"), gen_data_tree(g, scope, depth + 1));
            }
            Value::Object(map)
        }
        _ => {
            let printable = scope.printable_var();
            if printable.is_empty() {
                Value::str(str_literal(g))
            } else {
                let i = g.rng.random_range(0..printable.len());
                Value::str(format!("${{{}}}", printable[i]))
            }
        }
    }
}

fn gen_join(g: &mut Gen) -> JoinSpec {
    match g.rng.random_range(0..4) {
        0 => JoinSpec { mode: JoinMode::Text, with: Some(", ".to_string()) },
        1 => JoinSpec { mode: JoinMode::Text, with: None },
        2 => JoinSpec { mode: JoinMode::Array, with: None },
        _ => JoinSpec::default(),
    }
}

fn gen_block(g: &mut Gen, scope: &mut Scope, depth: usize) -> (Block, Kind) {
    g.spend(1);
    let deep = depth >= 3 || g.budget <= 2;

    let choice = if deep { g.rng.random_range(0..6) } else { g.rng.random_range(0..14) };
    let (body, mut kind) = match choice {
        0 => {
            let s = str_literal(g);
            (BlockBody::Expr(TemplateExpr::literal_str(s)), Kind::Str)
        }
        1 => (BlockBody::Expr(template(&format!("${{{}}}", int_expr_src(g, scope)))), Kind::Int),
        2 => (BlockBody::Expr(TemplateExpr::literal(Value::Bool(g.chance(0.5)))), Kind::Other),
        3 => {
            // Environment lookup of a bound name.
            let all = scope.any_var();
            if all.is_empty() {
                (BlockBody::Expr(TemplateExpr::literal_str("unbound-free")), Kind::Str)
            } else {
                let i = g.rng.random_range(0..all.len());
                let name = all[i].clone();
                let kind = if scope.ints.contains(&name) {
                    Kind::Int
                } else if scope.strs.contains(&name) {
                    Kind::Str
                } else {
                    Kind::Other
                };
                (BlockBody::Expr(template(&format!("${{{name}}}"))), kind)
            }
        }
        4 => {
            let printable = scope.printable_var();
            if printable.is_empty() {
                (BlockBody::Expr(TemplateExpr::literal_str(str_literal(g))), Kind::Str)
            } else {
                let i = g.rng.random_range(0..printable.len());
                let name = printable[i].clone();
                (
                    BlockBody::Expr(template(&format!(
                        "{}${{{name}}}{}",
                        str_literal(g),
                        str_literal(g)
                    ))),
                    Kind::Str,
                )
            }
        }
        5 => {
            (BlockBody::Data { value: gen_data_tree(g, scope, 0), raw: g.chance(0.2) }, Kind::Other)
        }
        6 => {
            g.spend(1);
            let mut inner = scope.clone();
            (BlockBody::LastOf(gen_program(g, &mut inner, depth + 1)), Kind::Other)
        }
        7 => {
            g.spend(1);
            let cond = template(&format!("${{{}}}", cond_src(g, scope)));
            let then = gen_body_program(g, scope, depth + 1);
            let otherwise =
                if g.chance(0.6) { Some(gen_body_program(g, scope, depth + 1)) } else { None };
            (BlockBody::If { condition: cond, then, otherwise }, Kind::Other)
        }
        8 => {
            g.spend(1);
            let count = TemplateExpr::literal(Value::int(g.rng.random_range(0..=4)));
            let body = gen_body_program(g, scope, depth + 1);
            (BlockBody::Repeat { body, count, join: gen_join(g) }, Kind::Other)
        }
        9 => (gen_until(g, scope, depth), Kind::Other),
        10 => {
            g.spend(1);
            // Function definition; callable later through its def name.
            let n_params = g.rng.random_range(0..=2usize);
            let mut params = IndexMap::new();
            let mut body_scope = scope.clone();
            let mut param_kinds = Vec::new();
            for _ in 0..n_params {
                let p = g.fresh("p");
                let kind = if g.chance(0.5) { Kind::Int } else { Kind::Str };
                params.insert(p.clone(), None);
                body_scope.add(p.clone(), kind);
                param_kinds.push((p, kind));
            }
            let body = gen_body_program(g, &mut body_scope, depth + 1);
            let f = g.fresh("f");
            scope.funcs.push((f.clone(), param_kinds));
            let block = Block { def: Some(f), ..Block::leaf(BlockBody::Function { params, body }) };
            return (block, Kind::Other);
        }
        11 if !scope.funcs.is_empty() => {
            g.spend(1);
            let (name, params) = g.pick(&scope.funcs).clone();
            let mut args = IndexMap::new();
            for (p, kind) in params {
                let src = match kind {
                    Kind::Int => format!("${{{}}}", int_expr_src(g, scope)),
                    _ => str_literal(g),
                };
                args.insert(p, template(&src));
            }
            (
                BlockBody::Call { func: template(&format!("${{{name}}}")), args, context: None },
                Kind::Other,
            )
        }
        12 => {
            g.spend(1);
            let input = if g.chance(0.6) {
                let mut inner = scope.clone();
                Some(gen_program(g, &mut inner, depth + 1))
            } else {
                None
            };
            (
                BlockBody::Model {
                    model: TemplateExpr::literal_str("pure:m"),
                    input,
                    parameters: None,
                },
                Kind::Str,
            )
        }
        _ => {
            g.spend(1);
            let mut inner = scope.clone();
            let source = gen_program(g, &mut inner, depth + 1);
            (BlockBody::Code { source, lang: "pure".to_string() }, Kind::Str)
        }
    };

    let mut block = Block::leaf(body);

    if g.chance(0.2) {
        let n = g.rng.random_range(1..=2usize);
        for _ in 0..n {
            let name = g.fresh("d");
            let (entry_kind, program) = if g.chance(0.5) {
                (
                    Kind::Int,
                    Program::single(Block::leaf(BlockBody::Expr(template(&format!(
                        "${{{}}}",
                        int_expr_src(g, scope)
                    ))))),
                )
            } else {
                (
                    Kind::Str,
                    Program::single(Block::leaf(BlockBody::Expr(TemplateExpr::literal_str(
                        str_literal(g),
                    )))),
                )
            };
            block.defs.insert(name.clone(), program);
            scope.add(name, entry_kind);
            g.spend(1);
        }
    }

    if g.chance(0.35) {
        let name = g.fresh("v");
        block.def = Some(name.clone());
        scope.add(name, kind);
    }

    if g.chance(0.25) {
        block.contribute = match g.rng.random_range(0..4) {
            0 => ContributeSet::context_only(),
            1 => ContributeSet::result_only(),
            2 => ContributeSet::none(),
            _ => ContributeSet::default(),
        };
        if !block.contribute.result {
            // The returned value degrades to the empty string; the def
            // binding (recorded above) keeps the true pair.
            kind = Kind::Str;
        }
    }

    (block, kind)
}

/// A terminating repeat-until under the literal rules (continue on true):
/// `[ {def: k, 0}, {repeat: {defs: {k: ${k+1}}, ...}, until: ${k < N}} ]`
/// wrapped in lastOf so it stays one block.
fn gen_until(g: &mut Gen, scope: &mut Scope, depth: usize) -> BlockBody {
    g.spend(3);
    let counter = g.fresh("k");
    let init = Block {
        def: Some(counter.clone()),
        ..Block::leaf(BlockBody::Expr(TemplateExpr::literal(Value::int(0))))
    };
    let mut body_scope = scope.clone();
    body_scope.add(counter.clone(), Kind::Int);
    let mut body_block = match gen_body_program(g, &mut body_scope, depth + 1) {
        Program::Single(b) => *b,
        list => Block::leaf(BlockBody::LastOf(list)),
    };
    body_block.defs.insert(
        counter.clone(),
        Program::single(Block::leaf(BlockBody::Expr(template(&format!("${{{counter} + 1}}"))))),
    );
    let limit = g.rng.random_range(1..=3);
    let until = Block::leaf(BlockBody::RepeatUntil {
        body: Program::single(body_block),
        until: template(&format!("${{{counter} < {limit}}}")),
        join: gen_join(g),
    });
    BlockBody::LastOf(Program::List(vec![init, until]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_budget_yields_a_leaf() {
        let p = gen_fragment_programs(0, 1);
        match p {
            Program::Single(b) => {
                assert!(matches!(b.body, BlockBody::Expr(_) | BlockBody::Data { .. }))
            }
            Program::List(blocks) => assert!(blocks.len() <= 3),
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        for seed in 0..50 {
            assert_eq!(gen_fragment_programs(seed, 40), gen_fragment_programs(seed, 40));
        }
    }

    #[test]
    fn seeds_produce_distinct_programs() {
        let a = gen_fragment_programs(1, 40);
        let b = gen_fragment_programs(2, 40);
        assert_ne!(a, b);
    }
}
