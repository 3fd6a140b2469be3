//! Pluggable model backends and code runners.
//!
//! Backends are selected by the scheme prefix of the model id
//! (`mock:anything`, `echo:m`, `scripted:chat`, `openai:granite-3`). Code
//! runners are selected by the `lang:` tag of code blocks; `expr` and `pdl`
//! are built in, `command` wraps an external interpreter process.

use std::io::{BufRead, BufReader, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use indexmap::IndexMap;

use crate::ast::{Message, Value};
use crate::json;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("model backend error for '{model}': {message}")]
pub struct BackendError {
    pub model: String,
    pub message: String,
}

impl BackendError {
    fn new(model: &str, message: impl Into<String>) -> Self {
        BackendError { model: model.to_string(), message: message.into() }
    }
}

/// A model call: the full model id (with scheme), the prompt as role-tagged
/// messages, and the opaque parameters object.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub parameters: IndexMap<String, Value>,
}

/// The semantics' oracle function `m`: a prompt in, a completion out.
/// Implementations must deliver streaming chunks whose concatenation equals
/// the returned string.
pub trait ModelBackend: Send + Sync {
    fn generate(
        &self,
        req: &ModelRequest,
        on_chunk: Option<&mut dyn FnMut(&str)>,
    ) -> Result<String, BackendError>;
}

/// Truncate a completion at the earliest stop sequence from
/// `parameters.stop`, dropping the stop sequence itself.
pub fn apply_stop(parameters: &IndexMap<String, Value>, text: &str) -> String {
    let Some(Value::Array(stops)) = parameters.get("stop") else {
        return text.to_string();
    };
    let mut cut = text.len();
    for stop in stops {
        if let Value::Str(s) = stop {
            if !s.is_empty() {
                if let Some(idx) = text.find(s.as_str()) {
                    cut = cut.min(idx);
                }
            }
        }
    }
    text[..cut].to_string()
}

fn deliver(text: String, on_chunk: Option<&mut dyn FnMut(&str)>) -> String {
    if let Some(cb) = on_chunk {
        // Chunked delivery in small pieces so streaming consumers are
        // genuinely exercised.
        let chars: Vec<char> = text.chars().collect();
        for piece in chars.chunks(8) {
            let s: String = piece.iter().collect();
            cb(&s);
        }
    }
    text
}

/// Returns a constant reply, whatever the prompt.
pub struct MockBackend {
    pub reply: String,
}

impl Default for MockBackend {
    fn default() -> Self {
        MockBackend { reply: "ok".to_string() }
    }
}

impl ModelBackend for MockBackend {
    fn generate(
        &self,
        req: &ModelRequest,
        on_chunk: Option<&mut dyn FnMut(&str)>,
    ) -> Result<String, BackendError> {
        Ok(deliver(apply_stop(&req.parameters, &self.reply), on_chunk))
    }
}

/// Returns the last user message reversed. Deterministic and prompt-sensitive.
pub struct EchoBackend;

impl ModelBackend for EchoBackend {
    fn generate(
        &self,
        req: &ModelRequest,
        on_chunk: Option<&mut dyn FnMut(&str)>,
    ) -> Result<String, BackendError> {
        let last_user = req
            .messages
            .iter()
            .rev()
            .find(|m| m.role == "user")
            .map(|m| m.content.chars().rev().collect::<String>())
            .unwrap_or_default();
        Ok(deliver(apply_stop(&req.parameters, &last_user), on_chunk))
    }
}

/// Replays a fixed queue of completions and records every request, for
/// deterministic tests.
#[derive(Default)]
pub struct ScriptedBackend {
    queue: Mutex<Vec<String>>,
    requests: Mutex<Vec<ModelRequest>>,
    served: AtomicU64,
}

impl ScriptedBackend {
    pub fn new(replies: Vec<String>) -> Self {
        ScriptedBackend {
            queue: Mutex::new(replies),
            requests: Mutex::new(Vec::new()),
            served: AtomicU64::new(0),
        }
    }

    /// Load a queue from a JSON array of strings.
    pub fn from_json_file(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read '{}': {e}", path.display()))?;
        let v = json::from_json(&text).map_err(|e| e.to_string())?;
        let Value::Array(items) = v else {
            return Err("scripted backend file must hold a JSON array of strings".to_string());
        };
        let mut replies = Vec::new();
        for item in items {
            match item {
                Value::Str(s) => replies.push(s),
                other => {
                    return Err(format!(
                        "scripted replies must be strings, found {}",
                        other.type_name()
                    ))
                }
            }
        }
        Ok(ScriptedBackend::new(replies))
    }

    pub fn requests(&self) -> Vec<ModelRequest> {
        self.requests.lock().unwrap().clone()
    }

    pub fn calls(&self) -> u64 {
        self.served.load(Ordering::SeqCst)
    }
}

impl ModelBackend for ScriptedBackend {
    fn generate(
        &self,
        req: &ModelRequest,
        on_chunk: Option<&mut dyn FnMut(&str)>,
    ) -> Result<String, BackendError> {
        self.requests.lock().unwrap().push(req.clone());
        let mut queue = self.queue.lock().unwrap();
        if queue.is_empty() {
            return Err(BackendError::new(
                &req.model_id,
                format!(
                    "scripted backend exhausted after {} calls",
                    self.served.load(Ordering::SeqCst)
                ),
            ));
        }
        let reply = queue.remove(0);
        self.served.fetch_add(1, Ordering::SeqCst);
        Ok(deliver(apply_stop(&req.parameters, &reply), on_chunk))
    }
}

/// Wraps a pure `String -> String` function of the flattened prompt, for
/// differential testing against the reference semantics.
pub struct PureFnBackend {
    pub f: Arc<dyn Fn(&str) -> String + Send + Sync>,
}

impl ModelBackend for PureFnBackend {
    fn generate(
        &self,
        req: &ModelRequest,
        on_chunk: Option<&mut dyn FnMut(&str)>,
    ) -> Result<String, BackendError> {
        let prompt: String = req.messages.iter().map(|m| m.content.as_str()).collect();
        Ok(deliver((self.f)(&prompt), on_chunk))
    }
}

/// Chat-completions HTTP backend. Base URL and key come from
/// `PDL_API_BASE` / `PDL_API_KEY` unless configured explicitly.
pub struct HttpBackend {
    pub base_url: String,
    pub api_key: Option<String>,
}

impl HttpBackend {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpBackend { base_url: base_url.into(), api_key: std::env::var("PDL_API_KEY").ok() }
    }

    pub fn from_env() -> Option<Self> {
        std::env::var("PDL_API_BASE").ok().map(HttpBackend::new)
    }

    fn request_body(&self, req: &ModelRequest, stream: bool) -> Result<String, BackendError> {
        let bare_model = req.model_id.split_once(':').map(|(_, m)| m).unwrap_or(&req.model_id);
        let mut body = IndexMap::new();
        body.insert("model".to_string(), Value::str(bare_model));
        let messages = req
            .messages
            .iter()
            .map(|m| {
                let mut obj = IndexMap::new();
                obj.insert("role".to_string(), Value::str(&m.role));
                obj.insert("content".to_string(), Value::str(&m.content));
                Value::Object(obj)
            })
            .collect();
        body.insert("messages".to_string(), Value::Array(messages));
        for (k, v) in &req.parameters {
            body.insert(k.clone(), v.clone());
        }
        if stream {
            body.insert("stream".to_string(), Value::Bool(true));
        }
        json::to_json(&Value::Object(body))
            .map_err(|e| BackendError::new(&req.model_id, e.to_string()))
    }
}

impl ModelBackend for HttpBackend {
    fn generate(
        &self,
        req: &ModelRequest,
        on_chunk: Option<&mut dyn FnMut(&str)>,
    ) -> Result<String, BackendError> {
        let url = format!("{}/chat/completions", self.base_url.trim_end_matches('/'));
        let stream = on_chunk.is_some();
        let body = self.request_body(req, stream)?;
        let mut builder = ureq::post(&url).header("content-type", "application/json");
        if let Some(key) = &self.api_key {
            builder = builder.header("authorization", &format!("Bearer {key}"));
        }
        let mut response = builder
            .send(body.as_bytes())
            .map_err(|e| BackendError::new(&req.model_id, format!("transport failure: {e}")))?;
        if response.status() != 200 {
            return Err(BackendError::new(&req.model_id, format!("HTTP {}", response.status())));
        }
        if !stream {
            let text = response
                .body_mut()
                .read_to_string()
                .map_err(|e| BackendError::new(&req.model_id, format!("read failure: {e}")))?;
            let v = json::from_json(&text).map_err(|_| {
                BackendError::new(&req.model_id, format!("malformed response: {text}"))
            })?;
            return extract_content(&v).ok_or_else(|| {
                BackendError::new(&req.model_id, format!("malformed response: {text}"))
            });
        }
        let cb = on_chunk.unwrap();
        let reader = BufReader::new(response.body_mut().as_reader());
        let mut full = String::new();
        for line in reader.lines() {
            let line = line.map_err(|e| {
                BackendError::new(&req.model_id, format!("stream read failure: {e}"))
            })?;
            let Some(data) = line.strip_prefix("data: ") else { continue };
            if data.trim() == "[DONE]" {
                break;
            }
            let v = json::from_json(data).map_err(|_| {
                BackendError::new(&req.model_id, format!("malformed stream event: {data}"))
            })?;
            if let Some(delta) = extract_delta(&v) {
                if !delta.is_empty() {
                    cb(&delta);
                    full.push_str(&delta);
                }
            }
        }
        Ok(full)
    }
}

fn extract_content(v: &Value) -> Option<String> {
    let Value::Object(top) = v else { return None };
    let Value::Array(choices) = top.get("choices")? else { return None };
    let Value::Object(choice) = choices.first()? else { return None };
    let Value::Object(message) = choice.get("message")? else { return None };
    match message.get("content")? {
        Value::Str(s) => Some(s.clone()),
        _ => None,
    }
}

fn extract_delta(v: &Value) -> Option<String> {
    let Value::Object(top) = v else { return None };
    let Value::Array(choices) = top.get("choices")? else { return None };
    let Value::Object(choice) = choices.first()? else { return None };
    let Value::Object(delta) = choice.get("delta")? else { return None };
    match delta.get("content")? {
        Value::Str(s) => Some(s.clone()),
        _ => None,
    }
}

/// Registry mapping model-id scheme prefixes to backends.
#[derive(Clone, Default)]
pub struct BackendRegistry {
    map: IndexMap<String, Arc<dyn ModelBackend>>,
}

impl BackendRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, scheme: impl Into<String>, backend: Arc<dyn ModelBackend>) {
        self.map.insert(scheme.into(), backend);
    }

    pub fn get(&self, scheme: &str) -> Option<&Arc<dyn ModelBackend>> {
        self.map.get(scheme)
    }

    /// Route a request by the scheme prefix of its model id.
    pub fn generate(
        &self,
        req: &ModelRequest,
        on_chunk: Option<&mut dyn FnMut(&str)>,
    ) -> Result<String, BackendError> {
        let scheme = req.model_id.split_once(':').map(|(s, _)| s).ok_or_else(|| {
            BackendError::new(&req.model_id, "model id must have a 'scheme:name' form")
        })?;
        let backend = self.map.get(scheme).ok_or_else(|| {
            BackendError::new(&req.model_id, format!("no backend registered for scheme '{scheme}'"))
        })?;
        backend.generate(req, on_chunk)
    }
}

/// Template for flattening role-tagged messages into a single prompt string,
/// for backends that accept only flat strings. `{role}` and `{content}` are
/// substituted per message.
#[derive(Debug, Clone)]
pub struct ChatTemplate {
    pub message_format: String,
}

impl Default for ChatTemplate {
    fn default() -> Self {
        ChatTemplate { message_format: "{role}: {content}\n".to_string() }
    }
}

pub fn flatten_chat(messages: &[Message], template: &ChatTemplate) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str(
            &template.message_format.replace("{role}", &m.role).replace("{content}", &m.content),
        );
    }
    out
}

/// Mutable state shared by the code blocks of one top-level evaluation,
/// keyed by language tag.
#[derive(Default)]
pub struct Session {
    store: Mutex<IndexMap<String, Value>>,
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, kind: &str) -> Option<Value> {
        self.store.lock().unwrap().get(kind).cloned()
    }

    pub fn set(&self, kind: impl Into<String>, state: Value) {
        self.store.lock().unwrap().insert(kind.into(), state);
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("code runner '{lang}' failed: {message}")]
pub struct CodeError {
    pub lang: String,
    pub message: String,
}

/// Everything a code runner may need from the enclosing evaluation.
pub struct CodeCtx<'a> {
    pub runners: &'a RunnerRegistry,
    pub backends: &'a BackendRegistry,
    pub session: &'a Session,
    pub base_dir: &'a Path,
    pub sandbox: bool,
}

/// The `⇓lang` relation: evaluate a source string to a value.
pub trait CodeRunner: Send + Sync {
    fn run(&self, lang: &str, source: &str, ctx: &CodeCtx) -> Result<Value, CodeError>;
}

/// Pure expression runner: evaluates the source as one template expression
/// in an empty environment. Touches no files, network, or environment.
pub struct ExprRunner;

impl CodeRunner for ExprRunner {
    fn run(&self, lang: &str, source: &str, _ctx: &CodeCtx) -> Result<Value, CodeError> {
        let env = crate::ast::Environment::initial(vec![]);
        let expr = crate::expr::parse_expression(source.trim())
            .map_err(|e| CodeError { lang: lang.to_string(), message: e })?;
        crate::expr::eval_expr_tree(&env, &expr)
            .map_err(|e| CodeError { lang: lang.to_string(), message: e.to_string() })
    }
}

/// Interpreter-in-interpreter: parses and evaluates the source as a PDL
/// program sharing this evaluation's backends and runners, with a fresh
/// context and session.
pub struct PdlRunner;

impl CodeRunner for PdlRunner {
    fn run(&self, lang: &str, source: &str, ctx: &CodeCtx) -> Result<Value, CodeError> {
        let err = |message: String| CodeError { lang: lang.to_string(), message };
        let program = crate::parser::parse_program(source).map_err(|diags| {
            err(format!(
                "generated program is invalid: {}",
                diags.iter().map(|d| d.render(None)).collect::<Vec<_>>().join("; ")
            ))
        })?;
        let program = crate::parser::desugar(program);
        let program = crate::parser::resolve_includes(program, ctx.base_dir)
            .map_err(|diags| err(diags[0].render(None)))?;
        let outcome =
            crate::eval::evaluate_nested(&program, ctx).map_err(|e| err(e.to_string()))?;
        Ok(outcome)
    }
}

/// A pure `(lang, source) -> String` stand-in for code execution.
pub type PureCodeFn = Arc<dyn Fn(&str, &str) -> String + Send + Sync>;

/// Wraps a pure code function, for differential testing against the
/// reference semantics.
pub struct PureFnRunner {
    pub f: PureCodeFn,
}

impl CodeRunner for PureFnRunner {
    fn run(&self, lang: &str, source: &str, _ctx: &CodeCtx) -> Result<Value, CodeError> {
        Ok(Value::Str((self.f)(lang, source)))
    }
}

/// Runs a configured external interpreter with the source on stdin. The last
/// stdout line is parsed as JSON, falling back to the raw stdout. Session
/// state round-trips through a JSON file named by `PDL_SESSION_FILE`.
pub struct CommandRunner {
    pub program: String,
    pub args: Vec<String>,
    pub timeout: Duration,
}

impl CommandRunner {
    pub fn new(program: impl Into<String>, args: Vec<String>) -> Self {
        CommandRunner { program: program.into(), args, timeout: Duration::from_secs(30) }
    }
}

static SESSION_COUNTER: AtomicU64 = AtomicU64::new(0);

impl CodeRunner for CommandRunner {
    fn run(&self, lang: &str, source: &str, ctx: &CodeCtx) -> Result<Value, CodeError> {
        let err = |message: String| CodeError { lang: lang.to_string(), message };

        let unique = format!(
            "pdl-{}-{}",
            std::process::id(),
            SESSION_COUNTER.fetch_add(1, Ordering::SeqCst)
        );
        let session_path: PathBuf = std::env::temp_dir().join(format!("{unique}.session.json"));
        let state = ctx.session.get(lang).unwrap_or_else(|| Value::Object(IndexMap::new()));
        let state_json = json::to_json(&state).map_err(|e| err(e.to_string()))?;
        std::fs::write(&session_path, &state_json)
            .map_err(|e| err(format!("cannot write session file: {e}")))?;

        let mut cmd = std::process::Command::new(&self.program);
        cmd.args(&self.args)
            .stdin(std::process::Stdio::piped())
            .stdout(std::process::Stdio::piped())
            .stderr(std::process::Stdio::piped());
        let workdir: Option<PathBuf> = if ctx.sandbox {
            let dir = std::env::temp_dir().join(format!("{unique}.work"));
            std::fs::create_dir_all(&dir)
                .map_err(|e| err(format!("cannot create sandbox dir: {e}")))?;
            cmd.env_clear();
            cmd.current_dir(&dir);
            Some(dir)
        } else {
            None
        };
        cmd.env("PDL_SESSION_FILE", &session_path);

        let result = (|| {
            let mut child =
                cmd.spawn().map_err(|e| err(format!("cannot start '{}': {e}", self.program)))?;
            child
                .stdin
                .take()
                .expect("stdin was piped")
                .write_all(source.as_bytes())
                .map_err(|e| err(format!("cannot write source to stdin: {e}")))?;

            let deadline = Instant::now() + self.timeout;
            let status = loop {
                match child.try_wait().map_err(|e| err(e.to_string()))? {
                    Some(status) => break status,
                    None if Instant::now() > deadline => {
                        let _ = child.kill();
                        let _ = child.wait();
                        return Err(err(format!("timed out after {:?}", self.timeout)));
                    }
                    None => std::thread::sleep(Duration::from_millis(5)),
                }
            };

            let mut stdout = String::new();
            let mut stderr = String::new();
            if let Some(mut out) = child.stdout.take() {
                let _ = out.read_to_string(&mut stdout);
            }
            if let Some(mut e) = child.stderr.take() {
                let _ = e.read_to_string(&mut stderr);
            }
            if !status.success() {
                return Err(err(format!(
                    "exit status {}: {}",
                    status.code().unwrap_or(-1),
                    stderr.trim()
                )));
            }

            if let Ok(text) = std::fs::read_to_string(&session_path) {
                if let Ok(state) = json::from_json(&text) {
                    ctx.session.set(lang, state);
                }
            }

            let last_line = stdout.lines().rev().find(|l| !l.trim().is_empty()).unwrap_or("");
            Ok(match json::from_json(last_line) {
                Ok(v) => v,
                Err(_) => Value::Str(stdout.trim_end_matches('\n').to_string()),
            })
        })();

        let _ = std::fs::remove_file(&session_path);
        if let Some(dir) = workdir {
            let _ = std::fs::remove_dir_all(dir);
        }
        result
    }
}

/// Registry mapping language tags to code runners.
#[derive(Clone, Default)]
pub struct RunnerRegistry {
    map: IndexMap<String, Arc<dyn CodeRunner>>,
}

impl RunnerRegistry {
    /// Registry with the built-in pure runners (`expr` and `pdl`).
    pub fn builtin() -> Self {
        let mut r = RunnerRegistry::default();
        r.register("expr", Arc::new(ExprRunner));
        r.register("pdl", Arc::new(PdlRunner));
        r
    }

    pub fn register(&mut self, lang: impl Into<String>, runner: Arc<dyn CodeRunner>) {
        self.map.insert(lang.into(), runner);
    }

    pub fn run_code(&self, lang: &str, source: &str, ctx: &CodeCtx) -> Result<Value, CodeError> {
        let runner = self.map.get(lang).ok_or_else(|| CodeError {
            lang: lang.to_string(),
            message: format!("no code runner registered for language '{lang}'"),
        })?;
        runner.run(lang, source, ctx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req(messages: Vec<Message>) -> ModelRequest {
        ModelRequest { model_id: "mock:m".to_string(), messages, parameters: IndexMap::new() }
    }

    fn ctx<'a>(
        runners: &'a RunnerRegistry,
        backends: &'a BackendRegistry,
        session: &'a Session,
    ) -> CodeCtx<'a> {
        CodeCtx { runners, backends, session, base_dir: Path::new("."), sandbox: false }
    }

    #[test]
    fn echo_reverses_last_user_message() {
        let r = ModelRequest { model_id: "echo:m".into(), ..req(vec![Message::user("ab")]) };
        assert_eq!(EchoBackend.generate(&r, None).unwrap(), "ba");
    }

    #[test]
    fn scripted_replays_in_order_and_records() {
        let b = ScriptedBackend::new(vec!["one".into(), "two".into()]);
        assert_eq!(b.generate(&req(vec![Message::user("q1")]), None).unwrap(), "one");
        assert_eq!(b.generate(&req(vec![Message::user("q2")]), None).unwrap(), "two");
        assert!(b.generate(&req(vec![]), None).is_err());
        assert_eq!(b.calls(), 2);
        assert_eq!(b.requests().len(), 3);
        assert_eq!(b.requests()[1].messages[0].content, "q2");
    }

    #[test]
    fn streaming_chunks_concatenate_to_result() {
        let b = MockBackend { reply: "a fairly long reply to split".into() };
        let mut seen = String::new();
        let mut cb = |s: &str| seen.push_str(s);
        let full = b.generate(&req(vec![]), Some(&mut cb)).unwrap();
        assert_eq!(seen, full);
    }

    #[test]
    fn stop_sequences_truncate() {
        let mut params = IndexMap::new();
        params.insert("stop".to_string(), Value::Array(vec![Value::str("\n\n")]));
        assert_eq!(apply_stop(&params, "keep\n\ndrop"), "keep");
        assert_eq!(apply_stop(&params, "no stops"), "no stops");
    }

    #[test]
    fn registry_routes_by_scheme() {
        let mut reg = BackendRegistry::new();
        reg.register("mock", Arc::new(MockBackend::default()));
        assert_eq!(reg.generate(&req(vec![]), None).unwrap(), "ok");
        let missing = ModelRequest { model_id: "nope:m".into(), ..req(vec![]) };
        assert!(reg.generate(&missing, None).is_err());
        let malformed = ModelRequest { model_id: "nocolon".into(), ..req(vec![]) };
        assert!(reg.generate(&malformed, None).is_err());
    }

    #[test]
    fn flatten_chat_default_template() {
        assert_eq!(flatten_chat(&[], &ChatTemplate::default()), "");
        assert_eq!(flatten_chat(&[Message::user("hi")], &ChatTemplate::default()), "user: hi\n");
        assert_eq!(
            flatten_chat(
                &[Message::new("system", "s"), Message::user("u")],
                &ChatTemplate::default()
            ),
            "system: s\nuser: u\n"
        );
    }

    #[test]
    fn expr_runner_evaluates_arithmetic() {
        let runners = RunnerRegistry::builtin();
        let backends = BackendRegistry::new();
        let session = Session::new();
        let v = runners.run_code("expr", "1+2", &ctx(&runners, &backends, &session)).unwrap();
        assert_eq!(v, Value::int(3));
    }

    #[test]
    fn unknown_lang_is_an_error() {
        let runners = RunnerRegistry::builtin();
        let backends = BackendRegistry::new();
        let session = Session::new();
        let err = runners.run_code("cobol", "x", &ctx(&runners, &backends, &session)).unwrap_err();
        assert!(err.message.contains("no code runner"));
    }

    #[test]
    fn command_runner_parses_last_json_line() {
        let mut runners = RunnerRegistry::builtin();
        runners.register("sh", Arc::new(CommandRunner::new("sh", vec!["-s".to_string()])));
        let backends = BackendRegistry::new();
        let session = Session::new();
        let v = runners
            .run_code("sh", "echo noise; echo '{\"ok\":true}'", &ctx(&runners, &backends, &session))
            .unwrap();
        let Value::Object(map) = v else { panic!() };
        assert_eq!(map.get("ok"), Some(&Value::Bool(true)));
    }

    #[test]
    fn command_runner_falls_back_to_raw_stdout() {
        let mut runners = RunnerRegistry::builtin();
        runners.register("sh", Arc::new(CommandRunner::new("sh", vec!["-s".to_string()])));
        let backends = BackendRegistry::new();
        let session = Session::new();
        let v = runners
            .run_code("sh", "echo not json at all", &ctx(&runners, &backends, &session))
            .unwrap();
        assert_eq!(v, Value::str("not json at all"));
    }

    #[test]
    fn command_runner_reports_nonzero_exit_with_stderr() {
        let mut runners = RunnerRegistry::builtin();
        runners.register("sh", Arc::new(CommandRunner::new("sh", vec!["-s".to_string()])));
        let backends = BackendRegistry::new();
        let session = Session::new();
        let err = runners
            .run_code("sh", "echo boom >&2; exit 3", &ctx(&runners, &backends, &session))
            .unwrap_err();
        assert!(err.message.contains("exit status 3"));
        assert!(err.message.contains("boom"));
    }

    #[test]
    fn session_round_trips_through_state_file() {
        let mut runners = RunnerRegistry::builtin();
        runners.register("sh", Arc::new(CommandRunner::new("sh", vec!["-s".to_string()])));
        let backends = BackendRegistry::new();
        let session = Session::new();
        let c = ctx(&runners, &backends, &session);
        runners.run_code("sh", "echo '{\"n\": 1}' > \"$PDL_SESSION_FILE\"; echo done", &c).unwrap();
        let v = runners.run_code("sh", "cat \"$PDL_SESSION_FILE\"", &c).unwrap();
        let Value::Object(map) = v else { panic!("{v:?}") };
        assert_eq!(map.get("n"), Some(&Value::int(1)));
    }
}
