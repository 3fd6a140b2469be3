//! The conformance rule table, shared by the conformance and acceptance
//! suites: one golden program per printed inference rule.

use super::*;
use pdl_core::ast::{Block, BlockBody, ContributeSet, JoinSpec, Program, Value};
use pdl_core::refsem::{self, RefEnv, RefHooks, RefValue};

/// What a rule's program must produce, frozen from hand-execution.
struct Frozen {
    /// Expected result value (None when the value is a closure, checked
    /// separately).
    value: Option<Value>,
    /// The closure's parameter names, when the value is a closure.
    closure_params: Option<Vec<&'static str>>,
    /// Expected flattened contribution.
    contribution: &'static str,
    /// Expected final context string.
    context: &'static str,
    /// Expected (name, value, stored string) bindings; names not listed are
    /// not asserted, names listed as absent must be unbound.
    bindings: Vec<(&'static str, Option<Value>, &'static str)>,
    /// Names that must not be bound after evaluation.
    unbound: Vec<&'static str>,
}

struct Rule {
    name: &'static str,
    program: Program,
    frozen: Frozen,
}

fn frozen_value(value: Value, contribution: &'static str, context: &'static str) -> Frozen {
    Frozen {
        value: Some(value),
        closure_params: None,
        contribution,
        context,
        bindings: vec![],
        unbound: vec![],
    }
}

#[allow(clippy::vec_init_then_push)]
fn rules() -> Vec<Rule> {
    let mut rules = Vec::new();

    // ⟨S, s⟩ ⇓ ⟨S, s, s⟩
    rules.push(Rule {
        name: "program-string",
        program: single(leaf("hello")),
        frozen: frozen_value(Value::str("hello"), "hello", ""),
    });

    // Block with def under a true contribute flag: S'[x ← (v, s)], v, s.
    rules.push(Rule {
        name: "block-def-contribute-true",
        program: single(Block { def: Some("x".into()), ..leaf("hi") }),
        frozen: Frozen {
            bindings: vec![("x", Some(Value::str("hi")), "hi")],
            ..frozen_value(Value::str("hi"), "hi", "")
        },
    });

    // Same under a false context flag: the binding keeps the true pair, the
    // block's string is empty.
    rules.push(Rule {
        name: "block-def-contribute-false",
        program: single(Block {
            def: Some("x".into()),
            contribute: ContributeSet::result_only(),
            ..leaf("hi")
        }),
        frozen: Frozen {
            bindings: vec![("x", Some(Value::str("hi")), "hi")],
            ..frozen_value(Value::str("hi"), "", "")
        },
    });

    // Empty defs pass straight through.
    rules.push(Rule {
        name: "defs-empty",
        program: single(Block { defs: defs(vec![]), ..leaf("b") }),
        frozen: frozen_value(Value::str("b"), "b", ""),
    });

    // defs evaluate left to right; each entry's environment changes are
    // discarded, only the binding survives.
    rules.push(Rule {
        name: "defs-cons",
        program: single(Block {
            defs: defs(vec![
                ("a", single(leaf("x"))),
                ("b", single(Block { def: Some("inner".into()), ..leaf("y") })),
            ]),
            ..leaf_template("${a}-${b}")
        }),
        frozen: Frozen {
            bindings: vec![("a", Some(Value::str("x")), "x"), ("b", Some(Value::str("y")), "y")],
            unbound: vec!["inner"],
            ..frozen_value(Value::str("x-y"), "x-y", "")
        },
    });

    // ⟨S, []⟩ ⇓ ⟨S, [], ""⟩
    rules.push(Rule {
        name: "array-empty",
        program: list(vec![]),
        frozen: frozen_value(Value::Array(vec![]), "", ""),
    });

    // Singleton list.
    rules.push(Rule {
        name: "array-singleton",
        program: list(vec![leaf("x")]),
        frozen: frozen_value(Value::Array(vec![Value::str("x")]), "x", ""),
    });

    // Cons: ctx = S(context) + s1 threads into the tail; witnessed by a
    // lookup of `context` as the third element.
    rules.push(Rule {
        name: "array-cons",
        program: list(vec![leaf("a"), leaf("b"), leaf_template("${context}")]),
        frozen: frozen_value(
            Value::Array(vec![Value::str("a"), Value::str("b"), Value::str("ab")]),
            "abab",
            "ab",
        ),
    });

    // Model rule: input renders in a scratch state (its def does not
    // escape), m applies to the flattened prompt, S comes back unchanged.
    rules.push(Rule {
        name: "model",
        program: single(Block::leaf(BlockBody::Model {
            model: template("pure:m"),
            input: Some(list(vec![Block { def: Some("tmp".into()), ..leaf("p1") }, leaf("p2")])),
            parameters: None,
        })),
        frozen: Frozen {
            unbound: vec!["tmp"],
            ..frozen_value(Value::str("M[4|p1p2]"), "M[4|p1p2]", "")
        },
    });

    // Code rule: the source renders in a scratch state, ⇓lang applies.
    rules.push(Rule {
        name: "code",
        program: single(Block::leaf(BlockBody::Code {
            source: list(vec![leaf("1+"), leaf("2")]),
            lang: "pure".into(),
        })),
        frozen: frozen_value(Value::str("C<pure>(1+2)"), "C<pure>(1+2)", ""),
    });

    // Lookup rule: a bare ${x} returns the stored pair, not a restringified
    // value; witnessed by a binding whose value and string differ.
    rules.push(Rule {
        name: "get",
        program: single(Block {
            defs: defs(vec![("x", list(vec![leaf("a"), leaf("b")]))]),
            ..leaf_template("${x}")
        }),
        frozen: Frozen {
            bindings: vec![("x", Some(Value::Array(vec![Value::str("a"), Value::str("b")])), "ab")],
            ..frozen_value(Value::Array(vec![Value::str("a"), Value::str("b")]), "ab", "")
        },
    });

    // Data rule: the expression tree evaluates, the contribution is str(v).
    rules.push(Rule {
        name: "data",
        program: single(Block::leaf(BlockBody::Data {
            value: pdl_core::json::from_json(r#"{"a": "${1+1}", "b": [1, "t"]}"#).unwrap(),
            raw: false,
        })),
        frozen: frozen_value(
            pdl_core::json::from_json(r#"{"a": 2, "b": [1, "t"]}"#).unwrap(),
            r#"{"a": 2, "b": [1, "t"]}"#,
            "",
        ),
    });

    // lastOf keeps the last value and the whole string; the inner cons rule
    // already appended the first element to the context.
    rules.push(Rule {
        name: "lastof",
        program: single(Block::leaf(BlockBody::LastOf(list(vec![leaf("a"), leaf("b")])))),
        frozen: frozen_value(Value::str("b"), "ab", "a"),
    });

    // If with a true condition takes the then branch.
    rules.push(Rule {
        name: "if-true",
        program: single(Block::leaf(BlockBody::If {
            condition: template("${1 < 2}"),
            then: single(leaf("a")),
            otherwise: Some(single(leaf("b"))),
        })),
        frozen: frozen_value(Value::str("a"), "a", ""),
    });

    // If with a false condition takes the else branch.
    rules.push(Rule {
        name: "if-false",
        program: single(Block::leaf(BlockBody::If {
            condition: template("${2 < 1}"),
            then: single(leaf("a")),
            otherwise: Some(single(leaf("b"))),
        })),
        frozen: frozen_value(Value::str("b"), "b", ""),
    });

    // Repeat with n > 1 recurs, appending each iteration's string to the
    // context; the result is the last iteration's pair.
    rules.push(Rule {
        name: "repeat-recursive",
        program: single(Block::leaf(BlockBody::Repeat {
            body: single(leaf("ab")),
            count: template("${3}"),
            join: JoinSpec::default(),
        })),
        frozen: frozen_value(Value::str("ab"), "ab", "abab"),
    });

    // Repeat with n ≤ 1 evaluates the body exactly once.
    rules.push(Rule {
        name: "repeat-base",
        program: single(Block::leaf(BlockBody::Repeat {
            body: single(leaf("x")),
            count: template("${1}"),
            join: JoinSpec::default(),
        })),
        frozen: frozen_value(Value::str("x"), "x", ""),
    });

    // Repeat-until under the literal rules continues while the condition is
    // true; a counter terminates it after two iterations.
    rules.push(Rule {
        name: "repeat-until-continue",
        program: list(vec![
            Block { def: Some("k".into()), ..leaf_value(Value::int(0)) },
            Block::leaf(BlockBody::RepeatUntil {
                body: single(Block {
                    defs: defs(vec![("k", single(leaf_template("${k + 1}")))]),
                    ..leaf("i")
                }),
                until: template("${k < 2}"),
                join: JoinSpec::default(),
            }),
        ]),
        frozen: Frozen {
            bindings: vec![("k", Some(Value::int(2)), "2")],
            ..frozen_value(Value::Array(vec![Value::int(0), Value::str("i")]), "0i", "0i")
        },
    });

    // Repeat-until stops as soon as the condition is false.
    rules.push(Rule {
        name: "repeat-until-stop",
        program: single(Block::leaf(BlockBody::RepeatUntil {
            body: single(leaf("x")),
            until: template("${false}"),
            join: JoinSpec::default(),
        })),
        frozen: frozen_value(Value::str("x"), "x", ""),
    });

    // Function rule: a closure value and the empty string.
    rules.push(Rule {
        name: "function",
        program: single(Block {
            def: Some("f".into()),
            ..Block::leaf(BlockBody::Function {
                params: [("x".to_string(), None)].into_iter().collect(),
                body: single(leaf_template("(${x})")),
            })
        }),
        frozen: Frozen {
            value: None,
            closure_params: Some(vec!["x"]),
            contribution: "",
            context: "",
            bindings: vec![],
            unbound: vec![],
        },
    });

    // Call rule: the body runs in the captured environment extended with the
    // caller's context and the arguments; the caller environment returns
    // unchanged.
    rules.push(Rule {
        name: "call",
        program: list(vec![
            Block {
                def: Some("f".into()),
                ..Block::leaf(BlockBody::Function {
                    params: [("x".to_string(), None)].into_iter().collect(),
                    body: single(leaf_template("(${x})")),
                })
            },
            Block::leaf(BlockBody::Call {
                func: template("${f}"),
                args: [("x".to_string(), pdl_core::expr::TemplateExpr::literal_str("hi"))]
                    .into_iter()
                    .collect(),
                context: None,
            }),
        ]),
        frozen: Frozen {
            value: None, // checked structurally below: [closure, "(hi)"]
            closure_params: None,
            contribution: "(hi)",
            context: "",
            bindings: vec![],
            unbound: vec!["x"],
        },
    });

    rules
}

fn check_rule(rule: &Rule) -> Result<(), String> {
    let hooks = RefHooks::test_hooks();

    let (env, value, contribution) =
        eval_fragment(&rule.program, &hooks).map_err(|e| format!("evaluator failed: {e}"))?;
    let oracle = refsem::ref_eval_program(RefEnv::initial(""), &rule.program, &hooks)
        .map_err(|e| format!("oracle failed: {e}"))?;

    // The two implementations agree on the full triple.
    refsem::outcomes_agree(&env, &value, &contribution, &oracle)
        .map_err(|e| format!("evaluator and oracle disagree: {e}"))?;

    // The frozen expectations hold.
    let frozen = &rule.frozen;
    if let Some(expected) = &frozen.value {
        if &value != expected {
            return Err(format!("value: expected {expected:?}, got {value:?}"));
        }
    }
    if let Some(params) = &frozen.closure_params {
        let Value::Closure(c) = &value else {
            return Err(format!("expected a closure value, got {value:?}"));
        };
        let got: Vec<&str> = c.params.keys().map(String::as_str).collect();
        if &got != params {
            return Err(format!("closure params: expected {params:?}, got {got:?}"));
        }
    }
    let flat = contribution.flatten();
    if flat != frozen.contribution {
        return Err(format!("contribution: expected {:?}, got {flat:?}", frozen.contribution));
    }
    let ctx = env.context().contribution.flatten();
    if ctx != frozen.context {
        return Err(format!("final context: expected {:?}, got {ctx:?}", frozen.context));
    }
    for (name, expected_value, expected_s) in &frozen.bindings {
        let binding = env.lookup(name).ok_or_else(|| format!("binding '{name}' missing"))?;
        if let Some(expected) = expected_value {
            if &binding.value != expected {
                return Err(format!(
                    "binding '{name}' value: expected {expected:?}, got {:?}",
                    binding.value
                ));
            }
        }
        let s = binding.contribution.flatten();
        if &s != expected_s {
            return Err(format!("binding '{name}' string: expected {expected_s:?}, got {s:?}"));
        }
    }
    for name in &frozen.unbound {
        if env.lookup(name).is_some() {
            return Err(format!("'{name}' should not be bound after evaluation"));
        }
    }

    // Rule-specific structural checks that don't fit the frozen table.
    if rule.name == "call" {
        let Value::Array(items) = &value else {
            return Err("call program should produce a two-element list".to_string());
        };
        if !matches!(items[0], Value::Closure(_)) || items[1] != Value::str("(hi)") {
            return Err(format!("call result: expected [closure, \"(hi)\"], got {items:?}"));
        }
        let RefValue::Arr(ref_items) = &oracle.1 else {
            return Err("oracle call result should be a list".to_string());
        };
        if !matches!(ref_items[0], RefValue::Closure(_)) {
            return Err("oracle call result should start with a closure".to_string());
        }
    }
    Ok(())
}

/// Run every rule; returns (passed, total, failures).
pub fn run_table(print: bool) -> (usize, usize, Vec<(&'static str, String)>) {
    let rules = rules();
    let total = rules.len();
    let mut passed = 0;
    let mut failures = Vec::new();
    for rule in &rules {
        match check_rule(rule) {
            Ok(()) => {
                passed += 1;
                if print {
                    println!("  {:<28} PASS", rule.name);
                }
            }
            Err(e) => {
                if print {
                    println!("  {:<28} FAIL  {e}", rule.name);
                }
                failures.push((rule.name, e));
            }
        }
    }
    (passed, total, failures)
}
