//! C ABI for the PDL interpreter.
//!
//! The interpreter handle is opaque; configuration goes through string
//! key/value options, results come back as malloc'd JSON strings that the
//! caller releases with [`pdl_string_free`]. All entry points are
//! panic-safe and report failures through [`PdlStatus`] plus
//! [`pdl_last_error`].

use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use pdl_core::ast::{Message, Value};
use pdl_core::backends::{CommandRunner, HttpBackend, MockBackend, ScriptedBackend};
use pdl_core::eval::UntilPolarity;
use pdl_core::{Interpreter, PdlError};

/// Result of every fallible call. Parse/validation failures and evaluation
/// failures mirror the CLI exit codes.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum PdlStatus {
    Ok = 0,
    ErrEval = 1,
    ErrParse = 2,
    ErrInvalidArg = 3,
    ErrPanic = 4,
}

enum BackendSpec {
    Mock(String),
    Scripted(PathBuf),
    OpenAi(String),
}

/// Opaque interpreter configuration. Created by [`pdl_interpreter_new`],
/// released by [`pdl_interpreter_free`]. Each run builds a fresh evaluation
/// from this configuration, so a handle can run many programs.
pub struct PdlInterpreter {
    base_dir: PathBuf,
    stdin_script: Option<String>,
    until_polarity: UntilPolarity,
    max_iterations: u64,
    sandbox: bool,
    backends: Vec<(String, BackendSpec)>,
    runners: Vec<(String, String)>,
    data: Vec<(String, Value)>,
    context: Vec<Message>,
    last_error: CString,
}

impl PdlInterpreter {
    fn set_error(&mut self, message: impl Into<String>) {
        let msg: String = message.into();
        self.last_error = CString::new(msg.replace('\0', "?")).unwrap_or_default();
    }

    fn build(&self) -> Result<Interpreter, String> {
        let mut interp = Interpreter::new()
            .with_base_dir(self.base_dir.clone())
            .until_polarity(self.until_polarity)
            .max_iterations(self.max_iterations)
            .sandbox(self.sandbox)
            .with_initial_context(self.context.clone());
        for (scheme, spec) in &self.backends {
            interp = match spec {
                BackendSpec::Mock(reply) => interp
                    .with_backend(scheme.clone(), Arc::new(MockBackend { reply: reply.clone() })),
                BackendSpec::Scripted(path) => interp
                    .with_backend(scheme.clone(), Arc::new(ScriptedBackend::from_json_file(path)?)),
                BackendSpec::OpenAi(base) => {
                    interp.with_backend(scheme.clone(), Arc::new(HttpBackend::new(base.clone())))
                }
            };
        }
        for (lang, command) in &self.runners {
            let mut parts = command.split_whitespace();
            let program = parts.next().ok_or_else(|| format!("runner '{lang}' needs a program"))?;
            let args: Vec<String> = parts.map(str::to_string).collect();
            interp =
                interp.with_code_runner(lang.clone(), Arc::new(CommandRunner::new(program, args)));
        }
        for (name, value) in &self.data {
            interp = interp.with_data(name.clone(), value.clone());
        }
        if let Some(script) = &self.stdin_script {
            interp = interp.with_stdin_script(script.clone());
        }
        Ok(interp)
    }
}

unsafe fn cstr<'a>(ptr: *const c_char) -> Option<&'a str> {
    if ptr.is_null() {
        return None;
    }
    CStr::from_ptr(ptr).to_str().ok()
}

fn give_string(s: String, out: *mut *mut c_char) {
    if out.is_null() {
        return;
    }
    let c = CString::new(s.replace('\0', "?")).unwrap_or_default();
    unsafe { *out = c.into_raw() };
}

/// Create an interpreter handle with default configuration.
#[no_mangle]
pub extern "C" fn pdl_interpreter_new() -> *mut PdlInterpreter {
    Box::into_raw(Box::new(PdlInterpreter {
        base_dir: PathBuf::from("."),
        stdin_script: None,
        until_polarity: UntilPolarity::Example,
        max_iterations: 1_000_000,
        sandbox: false,
        backends: Vec::new(),
        runners: Vec::new(),
        data: Vec::new(),
        context: Vec::new(),
        last_error: CString::default(),
    }))
}

/// Release an interpreter handle. A null pointer is a no-op.
///
/// # Safety
/// `interp` must come from [`pdl_interpreter_new`] and not be used after.
#[no_mangle]
pub unsafe extern "C" fn pdl_interpreter_free(interp: *mut PdlInterpreter) {
    if !interp.is_null() {
        drop(Box::from_raw(interp));
    }
}

/// Configure the interpreter. Keys: `base_dir`, `stdin_script`,
/// `until_polarity` (`example`/`appendix`), `max_iterations`, `sandbox`
/// (`true`/`false`), `backend.mock`, `backend.scripted` (path to a JSON
/// array of replies), `backend.openai` (base URL), `runner.<lang>` (command
/// line), `data.<name>` (JSON value), `context` (JSON array of
/// `{role, content}` messages).
///
/// # Safety
/// `interp` must be a live handle; `key` and `value` must be valid
/// NUL-terminated UTF-8 strings.
#[no_mangle]
pub unsafe extern "C" fn pdl_interpreter_set_option(
    interp: *mut PdlInterpreter,
    key: *const c_char,
    value: *const c_char,
) -> PdlStatus {
    let Some(interp) = interp.as_mut() else { return PdlStatus::ErrInvalidArg };
    let (Some(key), Some(value)) = (cstr(key), cstr(value)) else {
        interp.set_error("key and value must be valid UTF-8");
        return PdlStatus::ErrInvalidArg;
    };
    let result = catch_unwind(AssertUnwindSafe(|| set_option(interp, key, value)));
    match result {
        Ok(Ok(())) => PdlStatus::Ok,
        Ok(Err(msg)) => {
            interp.set_error(msg);
            PdlStatus::ErrInvalidArg
        }
        Err(_) => {
            interp.set_error("panic while setting option");
            PdlStatus::ErrPanic
        }
    }
}

fn set_option(interp: &mut PdlInterpreter, key: &str, value: &str) -> Result<(), String> {
    match key {
        "base_dir" => interp.base_dir = PathBuf::from(value),
        "stdin_script" => interp.stdin_script = Some(value.to_string()),
        "until_polarity" => {
            interp.until_polarity = match value {
                "example" => UntilPolarity::Example,
                "appendix" => UntilPolarity::Appendix,
                other => return Err(format!("unknown until polarity '{other}'")),
            }
        }
        "max_iterations" => {
            interp.max_iterations = value
                .parse()
                .map_err(|_| format!("max_iterations must be an integer, found '{value}'"))?
        }
        "sandbox" => interp.sandbox = value == "true",
        "backend.mock" => interp.backends.push((
            "mock".to_string(),
            BackendSpec::Mock(if value.is_empty() { "ok".to_string() } else { value.to_string() }),
        )),
        "backend.scripted" => interp
            .backends
            .push(("scripted".to_string(), BackendSpec::Scripted(PathBuf::from(value)))),
        "backend.openai" => {
            interp.backends.push(("openai".to_string(), BackendSpec::OpenAi(value.to_string())))
        }
        "context" => {
            interp.context = serde_json::from_str(value)
                .map_err(|e| format!("context must be a JSON message array: {e}"))?
        }
        _ => {
            if let Some(lang) = key.strip_prefix("runner.") {
                interp.runners.push((lang.to_string(), value.to_string()));
            } else if let Some(name) = key.strip_prefix("data.") {
                let v = pdl_core::json::from_json(value).unwrap_or_else(|_| Value::str(value));
                interp.data.push((name.to_string(), v));
            } else {
                return Err(format!("unknown option '{key}'"));
            }
        }
    }
    Ok(())
}

fn outcome_json(value: &Value, context: &[Message]) -> Result<String, String> {
    let value_json = pdl_core::json::to_serde(value).map_err(|e| e.to_string())?;
    let doc = serde_json::json!({
        "value": value_json,
        "context": context,
    });
    serde_json::to_string(&doc).map_err(|e| e.to_string())
}

fn run_common(
    interp: &mut PdlInterpreter,
    source: Source<'_>,
    result_out: *mut *mut c_char,
) -> PdlStatus {
    let built = match interp.build() {
        Ok(i) => i,
        Err(msg) => {
            interp.set_error(msg);
            return PdlStatus::ErrInvalidArg;
        }
    };
    let outcome = catch_unwind(AssertUnwindSafe(|| match source {
        Source::Text(text) => built.run_source(text),
        Source::File(path) => built.run_file(path),
    }));
    match outcome {
        Ok(Ok(out)) => match outcome_json(&out.value, &out.context) {
            Ok(json) => {
                give_string(json, result_out);
                PdlStatus::Ok
            }
            Err(msg) => {
                interp.set_error(format!("result is not serializable: {msg}"));
                PdlStatus::ErrEval
            }
        },
        Ok(Err(PdlError::Invalid(diags))) => {
            let msg = diags.iter().map(|d| d.render(None)).collect::<Vec<_>>().join("\n");
            interp.set_error(msg);
            PdlStatus::ErrParse
        }
        Ok(Err(PdlError::Eval(e))) => {
            interp.set_error(e.to_string());
            PdlStatus::ErrEval
        }
        Err(_) => {
            interp.set_error("panic during evaluation");
            PdlStatus::ErrPanic
        }
    }
}

enum Source<'a> {
    Text(&'a str),
    File(&'a Path),
}

/// Run a program from source text. On success, `*result_out` receives a
/// malloc'd JSON string `{"value": ..., "context": [...]}`; release it with
/// [`pdl_string_free`].
///
/// # Safety
/// `interp` must be a live handle; `source` must be NUL-terminated UTF-8;
/// `result_out`, when non-null, must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn pdl_run_source(
    interp: *mut PdlInterpreter,
    source: *const c_char,
    result_out: *mut *mut c_char,
) -> PdlStatus {
    let Some(interp) = interp.as_mut() else { return PdlStatus::ErrInvalidArg };
    let Some(source) = cstr(source) else {
        interp.set_error("source must be valid UTF-8");
        return PdlStatus::ErrInvalidArg;
    };
    run_common(interp, Source::Text(source), result_out)
}

/// Run a program file, resolving includes relative to its directory.
///
/// # Safety
/// As for [`pdl_run_source`].
#[no_mangle]
pub unsafe extern "C" fn pdl_run_file(
    interp: *mut PdlInterpreter,
    path: *const c_char,
    result_out: *mut *mut c_char,
) -> PdlStatus {
    let Some(interp) = interp.as_mut() else { return PdlStatus::ErrInvalidArg };
    let Some(path) = cstr(path) else {
        interp.set_error("path must be valid UTF-8");
        return PdlStatus::ErrInvalidArg;
    };
    run_common(interp, Source::File(Path::new(path)), result_out)
}

/// Validate a document without running it. `*diagnostics_out` receives a
/// malloc'd JSON array (empty when the document is valid); release it with
/// [`pdl_string_free`]. Returns `PDL_ERR_PARSE` when diagnostics are
/// non-empty.
///
/// # Safety
/// `source` must be NUL-terminated UTF-8; `diagnostics_out`, when non-null,
/// must point to writable storage.
#[no_mangle]
pub unsafe extern "C" fn pdl_check_source(
    source: *const c_char,
    diagnostics_out: *mut *mut c_char,
) -> PdlStatus {
    let Some(source) = cstr(source) else { return PdlStatus::ErrInvalidArg };
    let result = catch_unwind(|| pdl_core::check_source(source));
    match result {
        Ok(diags) => {
            let json = serde_json::to_string(&diags).unwrap_or_else(|_| "[]".to_string());
            give_string(json, diagnostics_out);
            if diags.is_empty() {
                PdlStatus::Ok
            } else {
                PdlStatus::ErrParse
            }
        }
        Err(_) => PdlStatus::ErrPanic,
    }
}

/// The message of the most recent failure on this handle. Borrowed: valid
/// until the next call on the same handle; do not free.
///
/// # Safety
/// `interp` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn pdl_last_error(interp: *const PdlInterpreter) -> *const c_char {
    match interp.as_ref() {
        Some(i) => i.last_error.as_ptr(),
        None => std::ptr::null(),
    }
}

/// Release a string returned by this library. A null pointer is a no-op.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn pdl_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn pdl_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}
