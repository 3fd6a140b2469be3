//! Interpreter for PDL, a YAML-based prompt programming language.
//!
//! Programs are YAML documents made of blocks. Each block produces a value
//! and contributes role-tagged messages to a background context; model
//! blocks use that context as their prompt. The library exposes the parser,
//! the evaluator, pluggable model backends and code runners, and a reference
//! implementation of the operational semantics used for differential
//! testing.
//!
//! ```no_run
//! use pdl_core::Interpreter;
//!
//! let outcome = Interpreter::new()
//!     .with_stdin_script("hello\n")
//!     .run_source("- read:\n- \"done\"\n")
//!     .unwrap();
//! println!("{:?}", outcome.value);
//! ```

pub mod ast;
pub mod backends;
pub mod cli;
pub mod diag;
pub mod eval;
pub mod expr;
pub mod json;
pub mod parser;
pub mod refsem;
pub mod trace;
pub mod typecheck;

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use indexmap::IndexMap;

pub use ast::{Contribution, Environment, Message, Program, Value};
pub use backends::{BackendRegistry, CodeRunner, ModelBackend, RunnerRegistry};
pub use diag::{Diagnostic, DocPath, Severity};
pub use eval::{EvalError, EvalOptions, UntilPolarity};
pub use trace::{TraceDocument, TraceNode};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PdlError {
    #[error("{}", render_diagnostics(.0))]
    Invalid(Vec<Diagnostic>),
    #[error(transparent)]
    Eval(#[from] EvalError),
}

fn render_diagnostics(diags: &[Diagnostic]) -> String {
    diags.iter().map(|d| d.render(None)).collect::<Vec<_>>().join("\n")
}

/// What a run produced: the final value, the final background context, the
/// trace (when captured), and any warnings.
#[derive(Debug)]
pub struct RunOutcome {
    pub value: Value,
    pub context: Vec<Message>,
    pub trace: Option<TraceNode>,
    pub warnings: Vec<Diagnostic>,
}

/// Configured entry point: backends, runners, stdin wiring, initial
/// bindings. Consumed by a run.
pub struct Interpreter {
    backends: BackendRegistry,
    runners: RunnerRegistry,
    base_dir: PathBuf,
    options: EvalOptions,
    initial_context: Vec<Message>,
    data: IndexMap<String, Value>,
    stdin: Option<Box<dyn BufRead + Send>>,
    echo: Option<Box<dyn Write + Send>>,
    prompt_sink: Option<Box<dyn Write + Send>>,
    capture_trace: bool,
}

impl Default for Interpreter {
    fn default() -> Self {
        Self::new()
    }
}

impl Interpreter {
    /// An interpreter with the deterministic built-in backends (`mock:`,
    /// `echo:`) and code runners (`expr`, `pdl`); the `openai:` HTTP backend
    /// is registered when `PDL_API_BASE` is set.
    pub fn new() -> Self {
        let mut backends = BackendRegistry::new();
        backends.register("mock", Arc::new(backends::MockBackend::default()));
        backends.register("echo", Arc::new(backends::EchoBackend));
        if let Some(http) = backends::HttpBackend::from_env() {
            backends.register("openai", Arc::new(http));
        }
        Interpreter {
            backends,
            runners: RunnerRegistry::builtin(),
            base_dir: PathBuf::from("."),
            options: EvalOptions::default(),
            initial_context: Vec::new(),
            data: IndexMap::new(),
            stdin: None,
            echo: None,
            prompt_sink: None,
            capture_trace: false,
        }
    }

    pub fn with_backend(
        mut self,
        scheme: impl Into<String>,
        backend: Arc<dyn ModelBackend>,
    ) -> Self {
        self.backends.register(scheme, backend);
        self
    }

    pub fn with_code_runner(
        mut self,
        lang: impl Into<String>,
        runner: Arc<dyn CodeRunner>,
    ) -> Self {
        self.runners.register(lang, runner);
        self
    }

    pub fn with_base_dir(mut self, dir: impl Into<PathBuf>) -> Self {
        self.base_dir = dir.into();
        self
    }

    pub fn with_options(mut self, options: EvalOptions) -> Self {
        self.options = options;
        self
    }

    pub fn until_polarity(mut self, polarity: UntilPolarity) -> Self {
        self.options.until_polarity = polarity;
        self
    }

    pub fn max_iterations(mut self, cap: u64) -> Self {
        self.options.max_iterations = cap;
        self
    }

    pub fn sandbox(mut self, on: bool) -> Self {
        self.options.sandbox = on;
        self
    }

    pub fn stream(mut self, on: bool) -> Self {
        self.options.stream = on;
        self
    }

    /// Seed the background context (for example from a `--context` file).
    pub fn with_initial_context(mut self, messages: Vec<Message>) -> Self {
        self.initial_context = messages;
        self
    }

    /// Seed an initial variable binding.
    pub fn with_data(mut self, name: impl Into<String>, value: Value) -> Self {
        self.data.insert(name.into(), value);
        self
    }

    pub fn with_stdin(mut self, reader: Box<dyn BufRead + Send>) -> Self {
        self.stdin = Some(reader);
        self
    }

    /// Scripted stdin for deterministic runs: each `read:` consumes the next
    /// line.
    pub fn with_stdin_script(self, script: impl Into<String>) -> Self {
        self.with_stdin(Box::new(std::io::Cursor::new(script.into())))
    }

    /// Where model output is echoed as it is produced (the CLI passes
    /// stdout).
    pub fn with_model_echo(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.echo = Some(sink);
        self
    }

    /// Where `read:` messages are displayed (the CLI passes stderr).
    pub fn with_prompt_sink(mut self, sink: Box<dyn Write + Send>) -> Self {
        self.prompt_sink = Some(sink);
        self
    }

    pub fn capture_trace(mut self, on: bool) -> Self {
        self.capture_trace = on;
        self
    }

    /// Parse, validate, desugar, resolve includes, and evaluate a document.
    pub fn run_source(self, source: &str) -> Result<RunOutcome, PdlError> {
        let program = parser::parse_program(source).map_err(PdlError::Invalid)?;
        let program = parser::desugar(program);
        let program =
            parser::resolve_includes(program, &self.base_dir).map_err(PdlError::Invalid)?;
        self.run_program(&program)
    }

    /// Run a file, resolving includes relative to its directory.
    pub fn run_file(mut self, path: &Path) -> Result<RunOutcome, PdlError> {
        let program = parser::load_program_file(path).map_err(PdlError::Invalid)?;
        if let Some(parent) = path.parent() {
            self.base_dir = parent.to_path_buf();
        }
        self.run_program(&program)
    }

    /// Evaluate an already-loaded (desugared, include-free) program.
    pub fn run_program(self, program: &Program) -> Result<RunOutcome, PdlError> {
        if self.data.contains_key(ast::CONTEXT_VAR) {
            return Err(PdlError::Invalid(vec![Diagnostic::error(
                DocPath::root(),
                "'context' is reserved for the background context; seed it with an initial context instead",
            )]));
        }
        let run = eval::RunContext::new(self.backends, self.runners, self.base_dir, self.options);
        if let Some(stdin) = self.stdin {
            *run.input.lock().unwrap() = stdin;
        }
        *run.echo.lock().unwrap() = self.echo;
        *run.prompt_sink.lock().unwrap() = self.prompt_sink;
        *run.trace.lock().unwrap() = trace::TraceBuilder::new(self.capture_trace);

        let run = Arc::new(run);
        let mut state = eval::EvalState::new(run.clone(), self.initial_context);
        for (name, value) in self.data {
            state = state.seed(name, value);
        }

        let (value, final_state) = eval::run_top_level(state, program)?;
        let context = final_state.env.context_messages().to_vec();
        drop(final_state);

        let run = Arc::try_unwrap(run).unwrap_or_else(|arc| {
            // A leaked clone (from a panicking backend thread) falls back to
            // re-creating empty infrastructure; traces are lost but the run
            // result stands.
            eval::RunContext::new(
                BackendRegistry::new(),
                RunnerRegistry::default(),
                PathBuf::from("."),
                arc.options.clone(),
            )
        });
        let trace = run.trace.into_inner().unwrap().finish();
        let warnings = run.warnings.into_inner().unwrap();
        Ok(RunOutcome { value, context, trace, warnings })
    }
}

/// Validate a document without running it.
pub fn check_source(source: &str) -> Vec<Diagnostic> {
    match parser::load_yaml(source) {
        Err(d) => vec![d],
        Ok(doc) => parser::validate_meta_schema(&doc),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn run_scalar_program() {
        let out = Interpreter::new().run_source("\"hi\"").unwrap();
        assert_eq!(out.value, Value::str("hi"));
        assert_eq!(out.context, vec![Message::user("hi")]);
    }

    #[test]
    fn run_list_program_contexts() {
        let out = Interpreter::new().run_source("- \"a\"\n- \"b\"\n").unwrap();
        assert_eq!(out.value, Value::Array(vec![Value::str("a"), Value::str("b")]));
        assert_eq!(out.context, vec![Message::user("a"), Message::user("b")]);
    }

    #[test]
    fn invalid_document_reports_diagnostics() {
        let err = Interpreter::new().run_source("model: m\nread: f\n").unwrap_err();
        let PdlError::Invalid(diags) = err else { panic!() };
        assert!(diags[0].message.contains("ambiguous block kind"));
    }

    #[test]
    fn data_seeds_bindings() {
        let out = Interpreter::new()
            .with_data("question", Value::str("2+2"))
            .run_source("\"Q: ${question}\"")
            .unwrap();
        assert_eq!(out.value, Value::str("Q: 2+2"));
    }

    #[test]
    fn trace_captures_structure() {
        let out =
            Interpreter::new().capture_trace(true).run_source("text:\n- \"a\"\n- \"b\"\n").unwrap();
        let trace = out.trace.unwrap();
        assert_eq!(trace.kind, "text");
        assert_eq!(trace.children.len(), 2);
    }
}
