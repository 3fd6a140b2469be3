//! Evaluator behavior outside the oracle fragment: roles, reads, loops and
//! joins, object forms, calls, parsers and specs on blocks, warnings, and
//! the top-level context contract.

mod common;

use std::sync::Arc;

use pdl_core::ast::{Message, Value};
use pdl_core::backends::{MockBackend, ScriptedBackend};
use pdl_core::eval::UntilPolarity;
use pdl_core::{Interpreter, PdlError};

fn run(source: &str) -> pdl_core::RunOutcome {
    Interpreter::new().run_source(source).unwrap()
}

fn run_err(source: &str) -> pdl_core::EvalError {
    match Interpreter::new().run_source(source).unwrap_err() {
        PdlError::Eval(e) => e,
        other => panic!("expected an evaluation error, got {other:?}"),
    }
}

#[test]
fn repeat_last_of_grows_context_to_ababab() {
    let out = run("repeat: \"ab\"\nnum_iterations: 3\n");
    assert_eq!(out.value, Value::str("ab"));
    let flat: String = out.context.iter().map(|m| m.content.as_str()).collect();
    assert_eq!(flat, "ababab");
}

#[test]
fn if_without_else_yields_empty() {
    let out = run("if: ${ 1 > 2 }\nthen: \"a\"\n");
    assert_eq!(out.value, Value::str(""));
    assert!(out.context.is_empty());
}

#[test]
fn for_text_join_with_separator() {
    let out =
        run("for:\n  x: \"${ [1, 2, 3] }\"\nrepeat: ${ x }\njoin:\n  as: text\n  with: \",\"\n");
    assert_eq!(out.value, Value::str("1,2,3"), "separator only between iterations");
}

#[test]
fn for_over_empty_list_yields_empty_text() {
    let out = run("for:\n  x: \"${ [] }\"\nrepeat: ${ x }\njoin:\n  as: text\n");
    assert_eq!(out.value, Value::str(""));
    assert!(out.context.is_empty(), "empty iteration contributes nothing");
}

#[test]
fn for_array_join_collects_values() {
    let out = run("for:\n  x: \"${ [1, 2] }\"\nrepeat: ${ x * 10 }\njoin:\n  as: array\n");
    assert_eq!(out.value, Value::Array(vec![Value::int(10), Value::int(20)]));
}

#[test]
fn for_mismatched_lengths_names_bindings() {
    let e = run_err("for:\n  a: \"${ [1, 2] }\"\n  b: \"${ [1] }\"\nrepeat: ${ a }\n");
    assert!(e.message.contains("'a' has 2"), "{}", e.message);
    assert!(e.message.contains("'b' has 1"), "{}", e.message);
}

#[test]
fn for_non_list_binding_errors() {
    let e = run_err("for:\n  a: \"${ 5 }\"\nrepeat: ${ a }\n");
    assert!(e.message.contains("must be a list"), "{}", e.message);
}

#[test]
fn for_loop_variables_are_scoped() {
    let e = run_err("- for:\n    x: \"${ [1] }\"\n  repeat: ${ x }\n- ${ x }\n");
    assert!(e.message.contains("undefined variable 'x'"), "{}", e.message);
}

#[test]
fn roles_inherit_from_enclosing_blocks() {
    // The roled block is followed by a sibling, so the context after it is
    // exactly its contribution (the cons rule replaces internal growth).
    let source = r#"
- role: system
  text:
  - "instructions"
  - model: "mock:m"
  - role: user
    text:
    - "question"
- "end"
"#;
    let out = run(source);
    let roles: Vec<&str> = out.context.iter().map(|m| m.role.as_str()).collect();
    // The explicit system role reaches the leaf and the model; the inner
    // explicit user role overrides for its subtree.
    assert_eq!(roles, vec!["system", "system", "user", "user"]);
}

#[test]
fn model_defaults_to_assistant_without_explicit_roles() {
    let out = run("- text:\n  - \"q\"\n  - model: \"mock:m\"\n- \"end\"\n");
    let roles: Vec<&str> = out.context.iter().map(|m| m.role.as_str()).collect();
    assert_eq!(roles, vec!["user", "assistant", "user"]);
}

#[test]
fn contribute_empty_suppresses_both_but_def_sees_truth() {
    let out = run("- def: x\n  contribute: []\n  text: \"secret\"\n- ${ x }\n");
    let Value::Array(values) = &out.value else { panic!() };
    assert_eq!(values[0], Value::str(""), "result suppressed");
    assert_eq!(values[1], Value::str("secret"), "def kept the true pair");
    let flat: String = out.context.iter().map(|m| m.content.as_str()).collect();
    assert_eq!(flat, "secret", "only the lookup block contributed");
}

#[test]
fn model_stop_parameters_truncate() {
    let out = Interpreter::new()
        .with_backend("mock", Arc::new(MockBackend { reply: "keep\n\ndropped".into() }))
        .run_source("model: \"mock:m\"\nparameters:\n  stop: [\"\\n\\n\"]\n")
        .unwrap();
    assert_eq!(out.value, Value::str("keep"));
}

#[test]
fn model_parameters_are_templated() {
    let backend = Arc::new(ScriptedBackend::new(vec!["r".into()]));
    Interpreter::new()
        .with_backend("scripted", backend.clone())
        .run_source("- def: t\n  data: 0.5\n  contribute: []\n- model: \"scripted:m\"\n  parameters:\n    temperature: \"${ t }\"\n")
        .unwrap();
    let req = &backend.requests()[0];
    assert_eq!(req.parameters.get("temperature"), Some(&Value::float(0.5)));
}

#[test]
fn read_from_file_is_verbatim() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("data.txt"), "line one\nline two\n").unwrap();
    let out = Interpreter::new().with_base_dir(dir.path()).run_source("read: data.txt\n").unwrap();
    assert_eq!(out.value, Value::str("line one\nline two\n"));
}

#[test]
fn read_multiline_consumes_rest_of_stdin() {
    let out = Interpreter::new()
        .with_stdin_script("first\nrest a\nrest b\n")
        .run_source("- read:\n- read:\n  multiline: true\n")
        .unwrap();
    assert_eq!(out.value, Value::Array(vec![Value::str("first"), Value::str("rest a\nrest b\n")]));
}

#[test]
fn read_message_joins_contribution() {
    let out = Interpreter::new()
        .with_stdin_script("answer\n")
        .run_source("read:\nmessage: \"ask?\\n\"\n")
        .unwrap();
    assert_eq!(
        out.context,
        vec![Message::user("ask?\n"), Message::user("answer")],
        "the displayed message precedes the input in the context"
    );
}

#[test]
fn object_field_map_evaluates_per_field() {
    let out = run("object:\n  a: ${ 1 + 1 }\n  b: \"x\"\n");
    assert_eq!(out.value, pdl_core::json::from_json(r#"{"a": 2, "b": "x"}"#).unwrap());
}

#[test]
fn object_block_list_merges_later_wins() {
    let out = run("object:\n- data: {a: 1, b: 1}\n- data: {b: 2}\n");
    assert_eq!(out.value, pdl_core::json::from_json(r#"{"a": 1, "b": 2}"#).unwrap());
}

#[test]
fn object_list_rejects_non_object_children() {
    let e = run_err("object:\n- \"plain\"\n");
    assert!(e.message.contains("must produce objects"), "{}", e.message);
}

#[test]
fn text_over_closure_is_unserializable() {
    let e = run_err("text:\n- def: f\n  function:\n  return: \"x\"\n- ${ f if true else f }\n");
    assert!(e.message.contains("unserializable value"), "{}", e.message);
}

#[test]
fn call_errors() {
    let e = run_err("- def: x\n  data: 1\n- call: ${ x }\n");
    assert!(e.message.contains("not a function"), "{}", e.message);

    let source_missing = "- def: f\n  function:\n    a: null\n  return: ${ a }\n- call: ${ f }\n";
    let e = run_err(source_missing);
    assert!(e.message.contains("missing argument 'a'"), "{}", e.message);

    let source_extra =
        "- def: f\n  function: null\n  return: \"r\"\n- call: ${ f }\n  args:\n    b: 1\n";
    let e = run_err(source_extra);
    assert!(e.message.contains("unknown argument 'b'"), "{}", e.message);

    let source_typed = "- def: f\n  function:\n    a: int\n  return: ${ a }\n- call: ${ f }\n  args:\n    a: \"oops\"\n";
    let e = run_err(source_typed);
    assert!(e.message.contains("does not match its type"), "{}", e.message);
}

#[test]
fn call_with_typed_argument_passes() {
    let out = run("- def: f\n  function:\n    a: int\n  return: ${ a * 2 }\n- call: ${ f }\n  args:\n    a: 21\n");
    let Value::Array(values) = &out.value else { panic!() };
    assert_eq!(values[1], Value::int(42));
}

#[test]
fn pdl_context_resets_callee_context() {
    let source = r#"
- "history"
- def: f
  function: null
  return: ${ context }
- call: ${ f }
  pdl_context: []
"#;
    let out = run(source);
    let Value::Array(values) = &out.value else { panic!() };
    assert_eq!(values[2], Value::str(""), "the callee saw an empty context");
}

#[test]
fn callee_sees_caller_context_by_default() {
    let source =
        "- \"history\"\n- def: f\n  function: null\n  return: ${ context }\n- call: ${ f }\n";
    let out = run(source);
    let Value::Array(values) = &out.value else { panic!() };
    assert_eq!(values[2], Value::str("history"));
}

#[test]
fn data_raw_skips_templates() {
    let out = run("data:\n  v: \"${ not expanded }\"\nraw: true\n");
    assert_eq!(out.value, pdl_core::json::from_json(r#"{"v": "${ not expanded }"}"#).unwrap());
}

#[test]
fn data_template_errors_propagate_at_eval() {
    let e = run_err("data:\n  v: \"${ bad syntax here\"\n");
    assert!(e.message.contains("unterminated"), "{}", e.message);
}

#[test]
fn unresolved_include_is_an_eval_error() {
    let program =
        pdl_core::parser::desugar(pdl_core::parser::parse_program("include: other.pdl\n").unwrap());
    let err = Interpreter::new().run_program(&program).unwrap_err();
    let PdlError::Eval(e) = err else { panic!() };
    assert!(e.message.contains("unresolved include"), "{}", e.message);
}

#[test]
fn repeat_non_integer_count_errors() {
    let e = run_err("repeat: \"x\"\nnum_iterations: ${ 1.5 }\n");
    assert!(e.message.contains("must be an integer"), "{}", e.message);
}

#[test]
fn repeat_below_one_warns_and_runs_once() {
    let out = run("repeat: \"x\"\nnum_iterations: 0\n");
    assert_eq!(out.value, Value::str("x"));
    assert_eq!(out.warnings.len(), 1);
    assert!(out.warnings[0].message.contains("evaluates its body once"));
}

#[test]
fn runaway_until_loop_hits_iteration_cap() {
    let err = Interpreter::new()
        .max_iterations(50)
        .run_source("repeat: \"x\"\nuntil: ${ false }\n")
        .unwrap_err();
    let PdlError::Eval(e) = err else { panic!() };
    assert!(e.message.contains("iteration cap (50)"), "{}", e.message);
}

#[test]
fn until_polarity_example_terminates_on_true() {
    let out = run("repeat: \"x\"\nuntil: ${ true }\n");
    assert_eq!(out.value, Value::str("x"), "exactly one iteration");
}

#[test]
fn until_polarity_appendix_flips() {
    let out = Interpreter::new()
        .until_polarity(UntilPolarity::Appendix)
        .run_source("repeat: \"x\"\nuntil: ${ false }\n")
        .unwrap();
    assert_eq!(out.value, Value::str("x"), "stops immediately when the condition is false");
}

#[test]
fn spec_violation_fails_conforming_passes() {
    let e = run_err("data: {name: \"Finish\"}\nspec: \"{name: str, arguments: obj}\"\n");
    assert!(e.message.contains("does not match spec"), "{}", e.message);
    assert!(e.message.contains("/arguments"), "{}", e.message);

    let out = run("data: {name: \"Search\", arguments: {topic: \"x\"}}\nspec: \"{name: str, arguments: obj}\"\n");
    assert!(matches!(out.value, Value::Object(_)));
}

#[test]
fn parser_requires_string_result() {
    let e = run_err("data: [1]\nparser: json\n");
    assert!(e.message.contains("parser requires a string result"), "{}", e.message);
}

#[test]
fn context_only_grows_with_initial_prefix() {
    let initial = vec![Message::new("system", "seed")];
    for source in [
        "- \"a\"\n- \"b\"\n",
        "repeat: \"x\"\nnum_iterations: 3\n",
        "- if: ${ true }\n  then: \"t\"\n- model: \"mock:m\"\n",
    ] {
        let out =
            Interpreter::new().with_initial_context(initial.clone()).run_source(source).unwrap();
        assert!(
            out.context.starts_with(&initial),
            "initial context must stay a prefix for {source:?}: {:?}",
            out.context
        );
    }
}

#[test]
fn library_runs_are_deterministic() {
    let source = "- model: \"mock:m\"\n- repeat: \"t\"\n  num_iterations: 2\n";
    let render = || {
        let out = Interpreter::new().capture_trace(true).run_source(source).unwrap();
        pdl_core::TraceDocument::new(out.trace.unwrap()).to_json()
    };
    assert_eq!(render(), render());
}

#[test]
fn empty_document_list_evaluates_to_empty_array() {
    let out = run("[]");
    assert_eq!(out.value, Value::Array(vec![]));
    assert!(out.context.is_empty());
}

#[test]
fn last_of_empty_list_is_empty_string() {
    let out = run("lastOf: []\n");
    assert_eq!(out.value, Value::str(""));
}

#[test]
fn model_id_must_evaluate_to_a_string() {
    let e = run_err("- def: n\n  data: 7\n  contribute: []\n- model: ${ n }\n");
    assert!(e.message.contains("model id must evaluate to a string"), "{}", e.message);
}

#[test]
fn object_fields_thread_context() {
    let out = run("object:\n  a: \"x\"\n  b: ${ context }\n");
    assert_eq!(out.value, pdl_core::json::from_json(r#"{"a": "x", "b": "x"}"#).unwrap());
}

#[test]
fn include_with_keywords_wraps_last_of() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("sub.pdl"), "- \"first\"\n- \"second\"\n").unwrap();
    std::fs::write(dir.path().join("main.pdl"), "- def: got\n  include: sub.pdl\n- ${ got }\n")
        .unwrap();
    let out = Interpreter::new().run_file(&dir.path().join("main.pdl")).unwrap();
    let Value::Array(values) = &out.value else { panic!() };
    assert_eq!(values[1], Value::str("second"), "a def'd include keeps lastOf semantics");
}

#[test]
fn defs_are_visible_to_later_siblings() {
    let out = run("- defs:\n    a: \"1\"\n  data: 0\n- ${ a }\n");
    let Value::Array(values) = &out.value else { panic!() };
    assert_eq!(values[1], Value::str("1"));
}

#[test]
fn nested_role_on_def_binding_contribution() {
    // A def'd model block stores role-tagged messages; pasting it back via
    // lookup keeps the stored roles.
    let out = run("- def: m\n  model: \"mock:m\"\n  contribute: []\n- ${ m }\n");
    assert_eq!(out.context, vec![Message::assistant("ok")]);
}
