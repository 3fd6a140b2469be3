//! The big-step evaluator: maps (environment, program) to (environment,
//! value, contribution), threading the background context through lists and
//! loops.
//!
//! Context updates follow the cons rule literally: after a list element
//! evaluates, the context becomes the element's *entry* context plus its
//! contribution, so a block's internal context growth never escapes past its
//! own contribution.

use std::io::{BufRead, Write};
use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use indexmap::IndexMap;

use crate::ast::{
    default_role, Binding, Block, BlockBody, Contribution, Environment, JoinMode, JoinSpec,
    Message, Number, ObjectBody, Program, Value,
};
use crate::backends::{BackendRegistry, CodeCtx, ModelRequest, RunnerRegistry, Session};
use crate::diag::{Diagnostic, DocPath};
use crate::expr::{eval_condition, eval_expr, stringify, TemplateExpr};
use crate::trace::TraceBuilder;
use crate::typecheck;

/// When a `repeat: until:` loop stops. The written rules continue on a true
/// condition; the worked examples terminate on one. The example reading is
/// the default; the appendix reading is behind a flag for differential study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum UntilPolarity {
    #[default]
    Example,
    Appendix,
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub until_polarity: UntilPolarity,
    pub max_iterations: u64,
    pub sandbox: bool,
    pub stream: bool,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            until_polarity: UntilPolarity::default(),
            max_iterations: 1_000_000,
            sandbox: false,
            stream: true,
        }
    }
}

/// Shared infrastructure of one top-level evaluation: backends, code
/// runners, session state, stdin, the model-output echo sink, the trace
/// recorder, and collected warnings.
pub struct RunContext {
    pub backends: BackendRegistry,
    pub runners: RunnerRegistry,
    pub base_dir: PathBuf,
    pub options: EvalOptions,
    pub session: Session,
    pub input: Mutex<Box<dyn BufRead + Send>>,
    pub echo: Mutex<Option<Box<dyn Write + Send>>>,
    pub prompt_sink: Mutex<Option<Box<dyn Write + Send>>>,
    pub trace: Mutex<TraceBuilder>,
    pub warnings: Mutex<Vec<Diagnostic>>,
}

impl RunContext {
    pub fn new(
        backends: BackendRegistry,
        runners: RunnerRegistry,
        base_dir: PathBuf,
        options: EvalOptions,
    ) -> Self {
        RunContext {
            backends,
            runners,
            base_dir,
            options,
            session: Session::new(),
            input: Mutex::new(Box::new(std::io::empty())),
            echo: Mutex::new(None),
            prompt_sink: Mutex::new(None),
            trace: Mutex::new(TraceBuilder::new(false)),
            warnings: Mutex::new(Vec::new()),
        }
    }
}

/// The state threaded through evaluation: the environment plus the inherited
/// explicit role and a handle to the shared run context. Cheap to clone.
#[derive(Clone)]
pub struct EvalState {
    pub env: Environment,
    role: Option<String>,
    run: Arc<RunContext>,
}

impl EvalState {
    pub fn new(run: Arc<RunContext>, initial_context: Vec<Message>) -> Self {
        EvalState { env: Environment::initial(initial_context), role: None, run }
    }

    pub fn seed(mut self, name: impl Into<String>, value: Value) -> Self {
        let contribution = match stringify(&value) {
            Ok(s) => Contribution::one(Message::user(s)),
            Err(_) => Contribution::empty(),
        };
        self.env = self.env.bind(name, Binding::new(value, contribution));
        self
    }

    pub fn run(&self) -> &Arc<RunContext> {
        &self.run
    }
}

/// The triple a reduction produces.
pub struct EvalOutcome {
    pub state: EvalState,
    pub value: Value,
    pub contribution: Contribution,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("error at {path}: {message}")]
pub struct EvalError {
    pub path: DocPath,
    pub message: String,
}

impl EvalError {
    fn new(path: &DocPath, message: impl Into<String>) -> Self {
        EvalError { path: path.clone(), message: message.into() }
    }
}

type Evaluated = Result<EvalOutcome, EvalError>;

/// Evaluate a program: a single block delegates to the block rules; a list
/// follows the array rules, threading the context between elements.
pub fn eval_program(st: EvalState, p: &Program, path: &DocPath) -> Evaluated {
    match p {
        Program::Single(block) => eval_block(st, block, path),
        Program::List(blocks) => {
            let mut state = st;
            let mut values = Vec::with_capacity(blocks.len());
            let mut contribution = Contribution::empty();
            for (i, block) in blocks.iter().enumerate() {
                let entry_context = state.env.context().contribution.clone();
                let out = eval_block(state, block, &path.index(i))?;
                values.push(out.value);
                state = out.state;
                if i + 1 < blocks.len() {
                    // ctx = S(context) + s1, with S the entry environment.
                    let ctx = entry_context.concat(&out.contribution);
                    state.env = state.env.with_context(ctx.0);
                }
                contribution = contribution.concat(&out.contribution);
            }
            Ok(EvalOutcome { state, value: Value::Array(values), contribution })
        }
    }
}

/// Evaluate one block: defs, body with the effective role, parser, spec,
/// def binding, contribute filtering.
pub fn eval_block(st: EvalState, block: &Block, path: &DocPath) -> Evaluated {
    let run = st.run.clone();
    {
        let mut trace = run.trace.lock().unwrap();
        trace.enter(block.body.kind_name(), path);
        if block.parser.is_some() || block.spec.is_some() {
            trace.annotate(
                block.parser.as_ref().map(parser_kind_name),
                block.spec.as_ref().map(typecheck::describe),
            );
        }
    }
    let role = block.role.clone().or_else(|| st.role.clone());
    let message_role = role.clone().unwrap_or_else(|| default_role(&block.body).to_string());

    let result = eval_block_inner(st, block, path, role, &message_role);
    match &result {
        Ok(out) => {
            let result_text = stringify(&out.value).unwrap_or_else(|_| "<function>".to_string());
            run.trace.lock().unwrap().exit(
                &message_role,
                &result_text,
                &out.contribution.flatten(),
            );
        }
        Err(_) => run.trace.lock().unwrap().abandon(),
    }
    result
}

fn eval_block_inner(
    st: EvalState,
    block: &Block,
    path: &DocPath,
    role: Option<String>,
    message_role: &str,
) -> Evaluated {
    let mut state = EvalState { role, ..st };

    // defs evaluate left to right; each entry runs in a scratch state and
    // only the binding survives (the defs rule threads S, not S_x).
    for (name, program) in &block.defs {
        let defs_path = path.key("defs").key(name);
        let out = eval_program(state.clone(), program, &defs_path)?;
        state.env = state.env.bind(name.clone(), Binding::new(out.value, out.contribution));
        state.run.trace.lock().unwrap().record_def(name);
    }

    let out = eval_body(state, &block.body, path, message_role)?;
    let EvalOutcome { state, value, contribution } = out;

    let value = match &block.parser {
        None => value,
        Some(kind) => {
            let raw = match &value {
                Value::Str(s) => s.clone(),
                other => {
                    return Err(EvalError::new(
                        path,
                        format!("parser requires a string result, found {}", other.type_name()),
                    ))
                }
            };
            typecheck::apply_parser(kind, &raw).map_err(|e| EvalError::new(path, e.to_string()))?
        }
    };

    if let Some(spec) = &block.spec {
        typecheck::check_spec(&value, spec)
            .map_err(|m| EvalError::new(path, format!("result does not match spec: {m}")))?;
    }

    let mut state = state;
    if let Some(name) = &block.def {
        state.env = state.env.bind(name.clone(), Binding::new(value.clone(), contribution.clone()));
    }

    let contribution = if block.contribute.context { contribution } else { Contribution::empty() };
    let value = if block.contribute.result { value } else { Value::Str(String::new()) };
    Ok(EvalOutcome { state, value, contribution })
}

fn eval_body(st: EvalState, body: &BlockBody, path: &DocPath, message_role: &str) -> Evaluated {
    match body {
        BlockBody::Expr(te) => eval_leaf(st, te, path, message_role),
        BlockBody::Model { model, input, parameters } => {
            eval_model(st, model, input.as_ref(), parameters.as_ref(), path, message_role)
        }
        BlockBody::Read { file, message, multiline } => {
            eval_read(st, file.as_deref(), message.as_deref(), *multiline, path, message_role)
        }
        BlockBody::Text(p) => eval_text(st, p, &path.key("text"), message_role),
        BlockBody::LastOf(p) => eval_last_of(st, p, &path.key("lastOf")),
        BlockBody::Array(p) => eval_array(st, p, &path.key("array")),
        BlockBody::Object(ob) => eval_object(st, ob, &path.key("object")),
        BlockBody::Data { value, raw } => eval_data(st, value, *raw, path, message_role),
        BlockBody::Include { file } => Err(EvalError::new(
            path,
            format!("unresolved include '{file}': includes must be resolved before evaluation"),
        )),
        BlockBody::Function { params, body } => eval_function(st, params, body),
        BlockBody::Call { func, args, context } => {
            eval_call(st, func, args, context.as_ref(), path, message_role)
        }
        BlockBody::If { condition, then, otherwise } => {
            eval_if(st, condition, then, otherwise.as_ref(), path)
        }
        BlockBody::For { bindings, body, join } => {
            eval_for(st, bindings, body, join, path, message_role)
        }
        BlockBody::Repeat { body, count, join } => {
            eval_repeat(st, body, count, join, path, message_role)
        }
        BlockBody::RepeatUntil { body, until, join } => {
            eval_repeat_until(st, body, until, join, path, message_role)
        }
        BlockBody::Code { source, lang } => eval_code(st, source, lang, path, message_role),
    }
}

fn expr_err(path: &DocPath, e: crate::expr::ExprError) -> EvalError {
    EvalError::new(path, e.to_string())
}

fn parser_kind_name(kind: &crate::ast::ParserKind) -> String {
    match kind {
        crate::ast::ParserKind::Json => "json".to_string(),
        crate::ast::ParserKind::Yaml => "yaml".to_string(),
        crate::ast::ParserKind::Jsonl => "jsonl".to_string(),
        crate::ast::ParserKind::Regex { pattern } => format!("regex:{pattern}"),
    }
}

/// A bare `${x}` leaf is the environment-lookup form: it yields both the
/// bound value and the *stored* contribution. Every other leaf contributes
/// one freshly stringified message.
fn eval_leaf(st: EvalState, te: &TemplateExpr, path: &DocPath, message_role: &str) -> Evaluated {
    if let Some(name) = te.as_bare_var() {
        let binding = st
            .env
            .lookup(name)
            .ok_or_else(|| EvalError::new(path, format!("undefined variable '{name}'")))?
            .clone();
        return Ok(EvalOutcome {
            state: st,
            value: binding.value,
            contribution: binding.contribution,
        });
    }
    let value = eval_expr(&st.env, te).map_err(|e| expr_err(path, e))?;
    let text = stringify(&value).map_err(|e| expr_err(path, e))?;
    let contribution = Contribution::one(Message::new(message_role, text));
    Ok(EvalOutcome { state: st, value, contribution })
}

fn eval_model(
    st: EvalState,
    model: &TemplateExpr,
    input: Option<&Program>,
    parameters: Option<&IndexMap<String, Value>>,
    path: &DocPath,
    message_role: &str,
) -> Evaluated {
    let model_id = match eval_expr(&st.env, model).map_err(|e| expr_err(path, e))? {
        Value::Str(s) => s,
        other => {
            return Err(EvalError::new(
                path,
                format!("model id must evaluate to a string, found {}", other.type_name()),
            ))
        }
    };

    let parameters = match parameters {
        None => IndexMap::new(),
        Some(p) => {
            let expanded =
                expand_templates(&st.env, &Value::Object(p.clone()), &path.key("parameters"))?;
            match expanded {
                Value::Object(map) => map,
                _ => IndexMap::new(),
            }
        }
    };

    // The prompt comes from the current context unless input: is given, in
    // which case input evaluates in a scratch state whose changes are
    // discarded (the rule returns the original environment).
    let messages = match input {
        None => st.env.context_messages().to_vec(),
        Some(program) => {
            let scratch = st.clone();
            let out = eval_program(scratch, program, &path.key("input"))?;
            out.contribution.0
        }
    };

    let req = ModelRequest { model_id: model_id.clone(), messages, parameters };
    let run = st.run.clone();
    let mut echo = run.echo.lock().unwrap();
    let completion = match echo.as_mut() {
        Some(sink) if st.run.options.stream => {
            let mut cb = |chunk: &str| {
                let _ = sink.write_all(chunk.as_bytes());
                let _ = sink.flush();
            };
            run.backends.generate(&req, Some(&mut cb))
        }
        Some(_) | None => run.backends.generate(&req, None),
    }
    .map_err(|e| EvalError::new(path, e.to_string()))?;
    if let Some(sink) = echo.as_mut() {
        if !st.run.options.stream {
            let _ = sink.write_all(completion.as_bytes());
            let _ = sink.flush();
        }
    }
    drop(echo);

    let contribution = Contribution::one(Message::new(message_role, completion.clone()));
    Ok(EvalOutcome { state: st, value: Value::Str(completion), contribution })
}

fn eval_code(
    st: EvalState,
    source: &Program,
    lang: &str,
    path: &DocPath,
    message_role: &str,
) -> Evaluated {
    // The source renders in a scratch state; the rule returns the original
    // environment.
    let out = eval_program(st.clone(), source, &path.key("code"))?;
    let source_text = out.contribution.flatten();
    let run = st.run.clone();
    let ctx = CodeCtx {
        runners: &run.runners,
        backends: &run.backends,
        session: &run.session,
        base_dir: &run.base_dir,
        sandbox: run.options.sandbox,
    };
    let value = run
        .runners
        .run_code(lang, &source_text, &ctx)
        .map_err(|e| EvalError::new(path, e.to_string()))?;
    let text = stringify(&value).map_err(|e| expr_err(path, e))?;
    let contribution = Contribution::one(Message::new(message_role, text));
    Ok(EvalOutcome { state: st, value, contribution })
}

fn eval_read(
    st: EvalState,
    file: Option<&str>,
    message: Option<&str>,
    multiline: bool,
    path: &DocPath,
    message_role: &str,
) -> Evaluated {
    let run = st.run.clone();
    let input = match file {
        Some(name) => {
            let full = run.base_dir.join(name);
            std::fs::read_to_string(&full).map_err(|e| {
                EvalError::new(path, format!("cannot read '{}': {e}", full.display()))
            })?
        }
        None => {
            if let Some(msg) = message {
                if let Some(sink) = run.prompt_sink.lock().unwrap().as_mut() {
                    let _ = sink.write_all(msg.as_bytes());
                    let _ = sink.flush();
                }
            }
            let mut reader = run.input.lock().unwrap();
            if multiline {
                let mut buf = String::new();
                reader
                    .read_to_string(&mut buf)
                    .map_err(|e| EvalError::new(path, format!("cannot read stdin: {e}")))?;
                buf
            } else {
                let mut line = String::new();
                reader
                    .read_line(&mut line)
                    .map_err(|e| EvalError::new(path, format!("cannot read stdin: {e}")))?;
                if line.ends_with('\n') {
                    line.pop();
                    if line.ends_with('\r') {
                        line.pop();
                    }
                }
                line
            }
        }
    };

    // The displayed message is part of what the conversation saw, so it
    // precedes the input in the contribution.
    let mut messages = Vec::new();
    if let Some(msg) = message {
        messages.push(Message::new(message_role, msg));
    }
    messages.push(Message::new(message_role, input.clone()));
    Ok(EvalOutcome { state: st, value: Value::Str(input), contribution: Contribution(messages) })
}

/// Walk a data tree, replacing templated strings. A string that is exactly
/// one `${...}` substitutes the expression's typed value.
fn expand_templates(env: &Environment, v: &Value, path: &DocPath) -> Result<Value, EvalError> {
    Ok(match v {
        Value::Str(s) => {
            let te = TemplateExpr::parse(s).map_err(|e| EvalError::new(path, e))?;
            eval_expr(env, &te).map_err(|e| expr_err(path, e))?
        }
        Value::Array(items) => Value::Array(
            items
                .iter()
                .enumerate()
                .map(|(i, item)| expand_templates(env, item, &path.index(i)))
                .collect::<Result<_, _>>()?,
        ),
        Value::Object(fields) => {
            let mut out = IndexMap::new();
            for (k, item) in fields {
                out.insert(k.clone(), expand_templates(env, item, &path.key(k))?);
            }
            Value::Object(out)
        }
        scalar => scalar.clone(),
    })
}

fn eval_data(
    st: EvalState,
    value: &Value,
    raw: bool,
    path: &DocPath,
    message_role: &str,
) -> Evaluated {
    let value = if raw { value.clone() } else { expand_templates(&st.env, value, path)? };
    let text = stringify(&value).map_err(|e| expr_err(path, e))?;
    let contribution = Contribution::one(Message::new(message_role, text));
    Ok(EvalOutcome { state: st, value, contribution })
}

fn eval_text(st: EvalState, p: &Program, path: &DocPath, message_role: &str) -> Evaluated {
    let _ = message_role;
    let out = eval_program(st, p, path)?;
    let text = match &out.value {
        Value::Array(items) => {
            let mut s = String::new();
            for item in items {
                s.push_str(&stringify(item).map_err(|e| expr_err(path, e))?);
            }
            s
        }
        single => stringify(single).map_err(|e| expr_err(path, e))?,
    };
    Ok(EvalOutcome { state: out.state, value: Value::Str(text), contribution: out.contribution })
}

fn eval_last_of(st: EvalState, p: &Program, path: &DocPath) -> Evaluated {
    let out = eval_program(st, p, path)?;
    let value = match (p, out.value) {
        (Program::List(_), Value::Array(values)) => {
            values.into_iter().next_back().unwrap_or_else(|| Value::Str(String::new()))
        }
        (_, v) => v,
    };
    Ok(EvalOutcome { state: out.state, value, contribution: out.contribution })
}

fn eval_array(st: EvalState, p: &Program, path: &DocPath) -> Evaluated {
    let out = eval_program(st, p, path)?;
    let value = match (p, out.value) {
        (Program::List(_), v) => v,
        (Program::Single(_), v) => Value::Array(vec![v]),
    };
    Ok(EvalOutcome { state: out.state, value, contribution: out.contribution })
}

fn eval_object(st: EvalState, body: &ObjectBody, path: &DocPath) -> Evaluated {
    match body {
        ObjectBody::Fields(fields) => {
            let mut state = st;
            let mut contribution = Contribution::empty();
            let mut object = IndexMap::new();
            let count = fields.len();
            for (i, (name, program)) in fields.iter().enumerate() {
                let entry_context = state.env.context().contribution.clone();
                let out = eval_program(state, program, &path.key(name))?;
                object.insert(name.clone(), out.value);
                state = out.state;
                if i + 1 < count {
                    let ctx = entry_context.concat(&out.contribution);
                    state.env = state.env.with_context(ctx.0);
                }
                contribution = contribution.concat(&out.contribution);
            }
            Ok(EvalOutcome { state, value: Value::Object(object), contribution })
        }
        ObjectBody::Blocks(program) => {
            let out = eval_program(st, program, path)?;
            let parts = match out.value {
                Value::Array(items) => items,
                single => vec![single],
            };
            let mut object = IndexMap::new();
            for part in parts {
                match part {
                    Value::Object(fields) => object.extend(fields),
                    other => {
                        return Err(EvalError::new(
                            path,
                            format!(
                                "object block children must produce objects, found {}",
                                other.type_name()
                            ),
                        ))
                    }
                }
            }
            Ok(EvalOutcome {
                state: out.state,
                value: Value::Object(object),
                contribution: out.contribution,
            })
        }
    }
}

fn eval_if(
    st: EvalState,
    condition: &TemplateExpr,
    then: &Program,
    otherwise: Option<&Program>,
    path: &DocPath,
) -> Evaluated {
    if eval_condition(&st.env, condition).map_err(|e| expr_err(&path.key("if"), e))? {
        eval_program(st, then, &path.key("then"))
    } else {
        match otherwise {
            Some(p) => eval_program(st, p, &path.key("else")),
            None => Ok(EvalOutcome {
                state: st,
                value: Value::Str(String::new()),
                contribution: Contribution::empty(),
            }),
        }
    }
}

struct Iterations {
    mode: JoinMode,
    values: Vec<Value>,
    contributions: Vec<Contribution>,
}

impl Iterations {
    fn new(join: &JoinSpec) -> Self {
        Iterations { mode: join.mode, values: Vec::new(), contributions: Vec::new() }
    }

    /// lastOf joins only ever need the latest iteration, so long loops stay
    /// constant-size.
    fn push(&mut self, value: Value, contribution: Contribution) {
        if self.mode == JoinMode::LastOf && !self.values.is_empty() {
            *self.values.last_mut().unwrap() = value;
            *self.contributions.last_mut().unwrap() = contribution;
        } else {
            self.values.push(value);
            self.contributions.push(contribution);
        }
    }
}

fn join_outcome(
    state: EvalState,
    iters: Iterations,
    join: &JoinSpec,
    path: &DocPath,
    message_role: &str,
) -> Evaluated {
    if iters.values.is_empty() {
        let value = match join.mode {
            JoinMode::Array => Value::Array(vec![]),
            _ => Value::Str(String::new()),
        };
        return Ok(EvalOutcome { state, value, contribution: Contribution::empty() });
    }
    match join.mode {
        JoinMode::LastOf => {
            let value = iters.values.into_iter().next_back().unwrap();
            let contribution = iters.contributions.into_iter().next_back().unwrap();
            Ok(EvalOutcome { state, value, contribution })
        }
        JoinMode::Text => {
            let sep = join.with.clone().unwrap_or_default();
            let parts = iters
                .values
                .iter()
                .map(stringify)
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| expr_err(path, e))?;
            let text = parts.join(&sep);
            let contribution = Contribution::one(Message::new(message_role, text.clone()));
            Ok(EvalOutcome { state, value: Value::Str(text), contribution })
        }
        JoinMode::Array => {
            let value = Value::Array(iters.values);
            let text = stringify(&value).map_err(|e| expr_err(path, e))?;
            let contribution = Contribution::one(Message::new(message_role, text));
            Ok(EvalOutcome { state, value, contribution })
        }
    }
}

fn eval_repeat(
    st: EvalState,
    body: &Program,
    count: &TemplateExpr,
    join: &JoinSpec,
    path: &DocPath,
    message_role: &str,
) -> Evaluated {
    let n = match eval_expr(&st.env, count).map_err(|e| expr_err(&path.key("num_iterations"), e))? {
        Value::Num(Number::Int(i)) => i,
        other => {
            return Err(EvalError::new(
                &path.key("num_iterations"),
                format!("repeat count must be an integer, found {}", other.type_name()),
            ))
        }
    };
    if n < 1 {
        st.run.warnings.lock().unwrap().push(Diagnostic::warning(
            path.clone(),
            format!("repeat with num_iterations {n} still evaluates its body once"),
        ));
    }
    // The base rule fires at n <= 1: the body always runs at least once.
    let total = n.max(1) as u64;
    if total > st.run.options.max_iterations {
        return Err(EvalError::new(
            path,
            format!(
                "repeat of {total} iterations exceeds the iteration cap ({})",
                st.run.options.max_iterations
            ),
        ));
    }

    let mut state = st;
    let mut iters = Iterations::new(join);
    for i in 0..total {
        let entry_context = state.env.context().contribution.clone();
        let out = eval_program(state, body, &path.key("repeat"))?;
        state = out.state;
        if i + 1 < total {
            let ctx = entry_context.concat(&out.contribution);
            state.env = state.env.with_context(ctx.0);
        }
        iters.push(out.value, out.contribution);
    }
    join_outcome(state, iters, join, path, message_role)
}

fn eval_repeat_until(
    st: EvalState,
    body: &Program,
    until: &TemplateExpr,
    join: &JoinSpec,
    path: &DocPath,
    message_role: &str,
) -> Evaluated {
    let polarity = st.run.options.until_polarity;
    let cap = st.run.options.max_iterations;
    let mut state = st;
    let mut iters = Iterations::new(join);
    let mut count: u64 = 0;
    loop {
        count += 1;
        if count > cap {
            return Err(EvalError::new(
                path,
                format!("repeat-until exceeded the iteration cap ({cap})"),
            ));
        }
        let entry_context = state.env.context().contribution.clone();
        let out = eval_program(state, body, &path.key("repeat"))?;
        state = out.state;
        // The condition evaluates in the post-iteration environment.
        let cond =
            eval_condition(&state.env, until).map_err(|e| expr_err(&path.key("until"), e))?;
        let stop = match polarity {
            UntilPolarity::Example => cond,
            UntilPolarity::Appendix => !cond,
        };
        if stop {
            iters.push(out.value, out.contribution);
            break;
        }
        let ctx = entry_context.concat(&out.contribution);
        state.env = state.env.with_context(ctx.0);
        iters.push(out.value, out.contribution);
    }
    join_outcome(state, iters, join, path, message_role)
}

fn eval_for(
    st: EvalState,
    bindings: &IndexMap<String, TemplateExpr>,
    body: &Program,
    join: &JoinSpec,
    path: &DocPath,
    message_role: &str,
) -> Evaluated {
    let mut lists: Vec<(String, Vec<Value>)> = Vec::new();
    for (name, te) in bindings {
        match eval_expr(&st.env, te).map_err(|e| expr_err(&path.key("for").key(name), e))? {
            Value::Array(items) => lists.push((name.clone(), items)),
            other => {
                return Err(EvalError::new(
                    &path.key("for").key(name),
                    format!("for binding '{name}' must be a list, found {}", other.type_name()),
                ))
            }
        }
    }
    let len = lists.first().map(|(_, l)| l.len()).unwrap_or(0);
    if let Some((bad, l)) = lists.iter().find(|(_, l)| l.len() != len) {
        let (first_name, first) = &lists[0];
        return Err(EvalError::new(
            &path.key("for"),
            format!(
                "for bindings have mismatched lengths: '{first_name}' has {}, '{bad}' has {}",
                first.len(),
                l.len()
            ),
        ));
    }

    // Loop variables are scoped to the loop; remember what they shadowed.
    let shadowed: Vec<(String, Option<Binding>)> =
        lists.iter().map(|(name, _)| (name.clone(), st.env.lookup(name).cloned())).collect();

    let mut state = st;
    let mut iters = Iterations::new(join);
    for i in 0..len {
        for (name, items) in &lists {
            let item = items[i].clone();
            let contribution = match stringify(&item) {
                Ok(text) => Contribution::one(Message::new(message_role, text)),
                Err(_) => Contribution::empty(),
            };
            state.env = state.env.bind(name.clone(), Binding::new(item, contribution));
        }
        let entry_context = state.env.context().contribution.clone();
        let out = eval_program(state, body, &path.key("repeat"))?;
        state = out.state;
        if i + 1 < len {
            let ctx = entry_context.concat(&out.contribution);
            state.env = state.env.with_context(ctx.0);
        }
        iters.push(out.value, out.contribution);
    }

    for (name, old) in shadowed {
        state.env = match old {
            Some(binding) => state.env.bind(name, binding),
            None => state.env.unbind(&name),
        };
    }
    join_outcome(state, iters, join, path, message_role)
}

fn eval_function(
    st: EvalState,
    params: &IndexMap<String, Option<crate::ast::TypeSpec>>,
    body: &Program,
) -> Evaluated {
    let closure = crate::ast::Closure {
        params: params.clone(),
        body: body.clone(),
        captured: st.env.clone(),
    };
    Ok(EvalOutcome {
        state: st,
        value: Value::Closure(Arc::new(closure)),
        contribution: Contribution::empty(),
    })
}

fn eval_call(
    st: EvalState,
    func: &TemplateExpr,
    args: &IndexMap<String, TemplateExpr>,
    pdl_context: Option<&Program>,
    path: &DocPath,
    message_role: &str,
) -> Evaluated {
    let target = eval_expr(&st.env, func).map_err(|e| expr_err(&path.key("call"), e))?;
    let closure = match &target {
        Value::Closure(c) => c.clone(),
        other => {
            return Err(EvalError::new(
                &path.key("call"),
                format!("call target is not a function, found {}", other.type_name()),
            ))
        }
    };

    for name in args.keys() {
        if !closure.params.contains_key(name) {
            return Err(EvalError::new(&path.key("args"), format!("unknown argument '{name}'")));
        }
    }

    // The callee context is the caller's, or pdl_context: evaluated in a
    // scratch state.
    let context_messages = match pdl_context {
        None => st.env.context_messages().to_vec(),
        Some(program) => {
            let out = eval_program(st.clone(), program, &path.key("pdl_context"))?;
            out.contribution.0
        }
    };

    let mut callee_env = closure.captured.with_context(context_messages);
    for (name, spec) in &closure.params {
        let te = args.get(name).ok_or_else(|| {
            EvalError::new(&path.key("args"), format!("missing argument '{name}'"))
        })?;
        let value = eval_expr(&st.env, te).map_err(|e| expr_err(&path.key("args").key(name), e))?;
        if let Some(spec) = spec {
            typecheck::check_spec(&value, spec).map_err(|m| {
                EvalError::new(
                    &path.key("args").key(name),
                    format!("argument '{name}' does not match its type: {m}"),
                )
            })?;
        }
        let contribution = match stringify(&value) {
            Ok(text) => Contribution::one(Message::new(message_role, text)),
            Err(_) => Contribution::empty(),
        };
        callee_env = callee_env.bind(name.clone(), Binding::new(value, contribution));
    }

    let callee_state = EvalState { env: callee_env, ..st.clone() };
    let out = eval_program(callee_state, &closure.body, &path.key("call"))?;
    // The caller's environment comes back unchanged.
    Ok(EvalOutcome { state: st, value: out.value, contribution: out.contribution })
}

/// Evaluate a whole document. Siblings thread the context by the cons rule
/// (each block's growth is replaced by its contribution); the final context
/// additionally appends the last block's contribution, as a hypothetical
/// enclosing cons would.
pub fn run_top_level(st: EvalState, p: &Program) -> Result<(Value, EvalState), EvalError> {
    let root = DocPath::root();
    match p {
        Program::Single(block) => {
            let out = eval_block(st, block, &root)?;
            let mut state = out.state;
            state.env = state.env.append_context(&out.contribution);
            Ok((out.value, state))
        }
        Program::List(blocks) => {
            let mut state = st;
            let mut values = Vec::with_capacity(blocks.len());
            let count = blocks.len();
            for (i, block) in blocks.iter().enumerate() {
                let entry_context = state.env.context().contribution.clone();
                let out = eval_block(state, block, &root.index(i))?;
                state = out.state;
                if i + 1 < count {
                    // ctx = S(context) + s1, with S the entry environment.
                    let ctx = entry_context.concat(&out.contribution);
                    state.env = state.env.with_context(ctx.0);
                } else {
                    state.env = state.env.append_context(&out.contribution);
                }
                values.push(out.value);
            }
            Ok((Value::Array(values), state))
        }
    }
}

/// Entry point for the `pdl` code runner: evaluate an already-loaded program
/// with the caller's registries, a fresh context, and a fresh session.
pub fn evaluate_nested(program: &Program, ctx: &CodeCtx) -> Result<Value, EvalError> {
    let run = RunContext::new(
        ctx.backends.clone(),
        ctx.runners.clone(),
        ctx.base_dir.to_path_buf(),
        EvalOptions { sandbox: ctx.sandbox, stream: false, ..EvalOptions::default() },
    );
    let st = EvalState::new(Arc::new(run), Vec::new());
    let (value, _) = run_top_level(st, program)?;
    Ok(value)
}
