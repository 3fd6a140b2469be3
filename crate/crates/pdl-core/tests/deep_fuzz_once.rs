//! One-off extended differential run (ignored by default).

mod common;

#[test]
#[ignore]
fn hundred_thousand_programs_agree() {
    let stats = common::run_differential(100_000);
    println!(
        "deep: {} clean, {} matched failures, {} disagreements",
        stats.successes,
        stats.matched_failures,
        stats.disagreements.len()
    );
    assert!(stats.disagreements.is_empty(), "first: {:?}", stats.disagreements.first());
}
