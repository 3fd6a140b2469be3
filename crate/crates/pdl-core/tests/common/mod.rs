//! Shared helpers for the integration suites: program builders, the
//! evaluator-vs-oracle differential harness, and scripted fixtures.

#![allow(dead_code)]

pub mod conformance;

use std::path::PathBuf;
use std::sync::Arc;

use indexmap::IndexMap;

use pdl_core::ast::{Block, BlockBody, Contribution, Environment, Program, Value};
use pdl_core::backends::{BackendRegistry, PureFnBackend, PureFnRunner, RunnerRegistry};
use pdl_core::diag::DocPath;
use pdl_core::eval::{self, EvalOptions, EvalState, RunContext, UntilPolarity};
use pdl_core::expr::TemplateExpr;
use pdl_core::refsem::{self, RefEnv, RefHooks};

pub fn leaf(s: &str) -> Block {
    Block::leaf(BlockBody::Expr(TemplateExpr::literal_str(s)))
}

pub fn leaf_value(v: Value) -> Block {
    Block::leaf(BlockBody::Expr(TemplateExpr::literal(v)))
}

pub fn leaf_template(src: &str) -> Block {
    Block::leaf(BlockBody::Expr(TemplateExpr::parse(src).expect("test template parses")))
}

pub fn template(src: &str) -> TemplateExpr {
    TemplateExpr::parse(src).expect("test template parses")
}

pub fn single(b: Block) -> Program {
    Program::single(b)
}

pub fn list(blocks: Vec<Block>) -> Program {
    Program::List(blocks)
}

pub fn defs(entries: Vec<(&str, Program)>) -> IndexMap<String, Program> {
    entries.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
}

/// Evaluate a fragment program with the evaluator, wired to the same pure
/// hooks the oracle uses and to the literal (appendix) until polarity.
pub fn eval_fragment(
    program: &Program,
    hooks: &RefHooks,
) -> Result<(Environment, Value, Contribution), pdl_core::eval::EvalError> {
    let mut backends = BackendRegistry::new();
    backends.register("pure", Arc::new(PureFnBackend { f: hooks.model.clone() }));
    let mut runners = RunnerRegistry::default();
    runners.register("pure", Arc::new(PureFnRunner { f: hooks.code.clone() }));
    let options = EvalOptions {
        until_polarity: UntilPolarity::Appendix,
        stream: false,
        ..EvalOptions::default()
    };
    let run = Arc::new(RunContext::new(backends, runners, PathBuf::from("."), options));
    let state = EvalState::new(run, vec![]);
    let out = eval::eval_program(state, program, &DocPath::root())?;
    Ok((out.state.env.clone(), out.value, out.contribution))
}

/// Run one program through both implementations and compare the full triple.
/// Matched failures count as agreement; the caller tracks the success rate.
pub fn differential_check(program: &Program) -> Result<bool, String> {
    let hooks = RefHooks::test_hooks();
    let eval_result = eval_fragment(program, &hooks);
    let oracle_result = refsem::ref_eval_program(RefEnv::initial(""), program, &hooks);
    match (eval_result, oracle_result) {
        (Ok((env, value, contribution)), Ok(triple)) => {
            refsem::outcomes_agree(&env, &value, &contribution, &triple)?;
            Ok(true)
        }
        (Err(_), Err(_)) => Ok(false),
        (Ok(_), Err(e)) => Err(format!("evaluator succeeded but oracle failed: {e}")),
        (Err(e), Ok(_)) => Err(format!("oracle succeeded but evaluator failed: {e}")),
    }
}

/// Statistics from a differential fuzzing run.
pub struct DifferentialStats {
    pub successes: u32,
    pub matched_failures: u32,
    pub disagreements: Vec<(u64, String)>,
}

/// Run `count` generated fragment programs through both implementations.
pub fn run_differential(count: u64) -> DifferentialStats {
    let mut stats =
        DifferentialStats { successes: 0, matched_failures: 0, disagreements: Vec::new() };
    for seed in 0..count {
        let budget = 10 + (seed % 31) as u32; // ≤ 40 nodes
        let program = pdl_core::refsem::genprog::gen_fragment_programs(seed, budget);
        match differential_check(&program) {
            Ok(true) => stats.successes += 1,
            Ok(false) => stats.matched_failures += 1,
            Err(e) => stats.disagreements.push((seed, e)),
        }
    }
    stats
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

pub fn golden_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("golden").join(name)
}

pub fn pdl_binary() -> &'static str {
    env!("CARGO_BIN_EXE_pdl")
}
