//! CLI contract: exit codes, diagnostics rendering, trace output, variable
//! and context seeding.

mod common;

use std::process::Command;

use common::{fixture_path, pdl_binary};

fn write_program(dir: &tempfile::TempDir, name: &str, source: &str) -> std::path::PathBuf {
    let path = dir.path().join(name);
    std::fs::write(&path, source).unwrap();
    path
}

fn run_cli(args: &[&std::ffi::OsStr]) -> std::process::Output {
    Command::new(pdl_binary()).args(args).output().unwrap()
}

fn s(text: &str) -> std::ffi::OsString {
    std::ffi::OsString::from(text)
}

#[test]
fn run_prints_string_verbatim_and_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_program(&dir, "hi.pdl", "\"hi\"\n");
    let out = run_cli(&[&s("run"), file.as_os_str()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(out.stdout, b"hi\n");
}

#[test]
fn run_prints_non_strings_as_json() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_program(&dir, "num.pdl", "data: {a: [1, 2]}\n");
    let out = run_cli(&[&s("run"), file.as_os_str()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(out.stdout, b"{\"a\": [1, 2]}\n");
}

#[test]
fn run_schema_error_exits_two_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_program(&dir, "bad.pdl", "- model: m\n  read: f\n");
    let out = run_cli(&[&s("run"), file.as_os_str()]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("ambiguous block kind"), "{stderr}");
    assert!(stderr.contains("/0"), "diagnostic carries the path: {stderr}");
}

#[test]
fn run_eval_error_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_program(&dir, "eval.pdl", "\"${ nope }\"\n");
    let out = run_cli(&[&s("run"), file.as_os_str()]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("undefined variable 'nope'"));
}

#[test]
fn check_accepts_the_chatbot() {
    let out = run_cli(&[&s("check"), fixture_path("chatbot.pdl").as_os_str()]);
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn check_rejects_unknown_keyword() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_program(&dir, "kw.pdl", "modell: x\n");
    let out = run_cli(&[&s("check"), file.as_os_str()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did you mean 'model'?"));
}

#[test]
fn check_suggests_for_type_shorthand_typo() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_program(&dir, "ty.pdl", "data: 1\nspec: strr\n");
    let out = run_cli(&[&s("check"), file.as_os_str()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("did you mean 'str'?"));
}

#[test]
fn check_json_diagnostics_is_machine_readable() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_program(&dir, "kw.pdl", "data: 1\ncontribute: [bogus]\n");
    let out = run_cli(&[&s("check"), file.as_os_str(), &s("--json-diagnostics")]);
    assert_eq!(out.status.code(), Some(2));
    let diags: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let arr = diags.as_array().unwrap();
    assert_eq!(arr.len(), 1);
    assert_eq!(arr[0]["path"], "/contribute/0");
    assert_eq!(arr[0]["severity"], "error");

    let ok = write_program(&dir, "ok.pdl", "\"fine\"\n");
    let out = run_cli(&[&s("check"), ok.as_os_str(), &s("--json-diagnostics")]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(out.stdout, b"[]\n");
}

#[test]
fn trace_of_a_leaf_is_one_expr_node() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_program(&dir, "hi.pdl", "\"hi\"\n");
    let trace = dir.path().join("trace.json");
    let out = run_cli(&[&s("run"), file.as_os_str(), &s("--trace"), trace.as_os_str()]);
    assert_eq!(out.status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&trace).unwrap()).unwrap();
    assert_eq!(doc["version"], "pdl-trace/1");
    assert_eq!(doc["root"]["kind"], "expr");
    assert_eq!(doc["root"]["result_preview"], "hi");
    assert!(doc["root"].get("children").is_none());
}

#[test]
fn data_flag_seeds_variables() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_program(&dir, "q.pdl", "\"${ question } -> ${ n + 1 }\"\n");
    let out = run_cli(&[
        &s("run"),
        file.as_os_str(),
        &s("--data"),
        &s("question=why?"),
        &s("--data"),
        &s("n=41"),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(out.stdout, b"why? -> 42\n");
}

#[test]
fn context_flag_seeds_messages() {
    let dir = tempfile::tempdir().unwrap();
    let ctx = dir.path().join("ctx.json");
    std::fs::write(&ctx, r#"[{"role": "system", "content": "seeded"}]"#).unwrap();
    let file = write_program(&dir, "c.pdl", "\"${ context }\"\n");
    let out = run_cli(&[&s("run"), file.as_os_str(), &s("--context"), ctx.as_os_str()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(out.stdout, b"seeded\n");
}

#[test]
fn until_polarity_flag_flips_loop_reading() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_program(&dir, "u.pdl", "repeat: \"x\"\nuntil: ${ false }\n");
    // Example polarity: false never terminates; the cap turns it into an error.
    let out = run_cli(&[&s("run"), file.as_os_str(), &s("--max-iterations"), &s("10")]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("iteration cap"));
    // Appendix polarity stops on a false condition immediately.
    let out = run_cli(&[&s("run"), file.as_os_str(), &s("--until-polarity"), &s("appendix")]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(out.stdout, b"x\n");
}

#[test]
fn warnings_go_to_stderr_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let file = write_program(&dir, "w.pdl", "repeat: \"x\"\nnum_iterations: 0\n");
    let out = run_cli(&[&s("run"), file.as_os_str()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(out.stdout, b"x\n");
    assert!(
        String::from_utf8_lossy(&out.stderr).contains("warning"),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn trace_flag_does_not_change_results() {
    let dir = tempfile::tempdir().unwrap();
    let file =
        write_program(&dir, "t.pdl", "- model: \"mock:m\"\n- repeat: \"x\"\n  num_iterations: 2\n");
    let plain = run_cli(&[&s("run"), file.as_os_str()]);
    let trace = dir.path().join("t.json");
    let traced = run_cli(&[&s("run"), file.as_os_str(), &s("--trace"), trace.as_os_str()]);
    assert_eq!(plain.status.code(), Some(0));
    assert_eq!(traced.status.code(), Some(0));
    assert_eq!(plain.stdout, traced.stdout, "--trace must not change evaluation output");
}

#[test]
fn missing_file_is_a_load_error() {
    let out = run_cli(&[&s("run"), &s("/nonexistent/nope.pdl")]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sandboxed_command_runner_gets_clean_environment() {
    let dir = tempfile::tempdir().unwrap();
    // \${ keeps the shell parameter expansion out of PDL's template syntax.
    let file =
        write_program(&dir, "env.pdl", "code: \"echo \\\"\\\\${HOME:-unset}\\\"\"\nlang: sh\n");
    let out =
        run_cli(&[&s("run"), file.as_os_str(), &s("--runner"), &s("sh=sh -s"), &s("--sandbox")]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(out.stdout, b"unset\n", "inherited environment must be dropped under --sandbox");
}
