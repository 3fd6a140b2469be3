//! Semantics conformance: one golden test per printed inference rule.
//!
//! Each rule gets a dedicated program; the evaluator's (bindings, value,
//! flattened contribution) must match the reference semantics exactly, and
//! both must match expectations frozen from hand-executing the rules. The
//! suite prints a rule-by-rule pass/fail table.

mod common;

#[test]
fn conformance_table() {
    let started = std::time::Instant::now();
    println!("semantics conformance:");
    let (passed, total, failures) = common::conformance::run_table(true);
    println!("conformance: {passed}/{total} rules");
    assert!(failures.is_empty(), "conformance failures: {failures:?}");
    assert!(total >= 20, "the appendix prints at least 20 rules");
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 5, "conformance took {elapsed:?}, budget is 5s");
}
