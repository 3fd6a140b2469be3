//! Compiles and runs a small C program against the generated header and the
//! built static library. Skips quietly when no C compiler is available.

use std::path::PathBuf;
use std::process::Command;

const C_PROGRAM: &str = r#"
#include <assert.h>
#include <stdio.h>
#include <string.h>
#include "pdl.h"

int main(void) {
    PdlInterpreter *interp = pdl_interpreter_new();
    assert(interp != NULL);

    assert(pdl_interpreter_set_option(interp, "data.n", "20") == PDL_STATUS_OK);

    char *result = NULL;
    PdlStatus status = pdl_run_source(interp, "\"${ n * 2 + 2 }\"", &result);
    assert(status == PDL_STATUS_OK);
    assert(strstr(result, "\"value\":42") != NULL);
    pdl_string_free(result);

    status = pdl_run_source(interp, "\"${ missing }\"", &result);
    assert(status == PDL_STATUS_ERR_EVAL);
    assert(strstr(pdl_last_error(interp), "missing") != NULL);

    char *diags = NULL;
    assert(pdl_check_source("model: m\nread: f\n", &diags) == PDL_STATUS_ERR_PARSE);
    assert(strstr(diags, "ambiguous") != NULL);
    pdl_string_free(diags);

    pdl_interpreter_free(interp);
    printf("c-smoke-ok\n");
    return 0;
}
"#;

fn find_staticlib() -> Option<PathBuf> {
    // Walk up from the test executable to the profile directory.
    let mut dir = std::env::current_exe().ok()?;
    dir.pop(); // test binary
    dir.pop(); // deps/
    let lib = dir.join("libpdl_ffi.a");
    lib.exists().then_some(lib)
}

#[test]
fn c_program_links_and_runs() {
    let cc = ["cc", "gcc", "clang"]
        .into_iter()
        .find(|cc| Command::new(cc).arg("--version").output().is_ok());
    let Some(cc) = cc else {
        eprintln!("skipping: no C compiler available");
        return;
    };
    let Some(staticlib) = find_staticlib() else {
        eprintln!("skipping: libpdl_ffi.a not built next to the test binary");
        return;
    };

    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = tempfile::tempdir().unwrap();
    let c_file = dir.path().join("smoke.c");
    let bin = dir.path().join("smoke");
    std::fs::write(&c_file, C_PROGRAM).unwrap();

    let compile = Command::new(cc)
        .arg(&c_file)
        .arg("-I")
        .arg(&include)
        .arg(&staticlib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&bin)
        .output()
        .unwrap();
    assert!(
        compile.status.success(),
        "C compilation failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "stderr: {}", String::from_utf8_lossy(&run.stderr));
    assert_eq!(String::from_utf8_lossy(&run.stdout), "c-smoke-ok\n");
}
