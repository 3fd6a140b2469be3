//! Typed abstract syntax of PDL programs and the runtime value universe.
//!
//! A program is a block or a list of blocks. Every block has a body (one of
//! sixteen kinds, counting bare expressions) plus the orthogonal structured
//! keywords (`def`, `defs`, `role`, `contribute`, `parser`, `spec`,
//! `description`). Evaluating a block produces a [`Value`] and a
//! [`Contribution`]: the role-tagged messages it appends to the background
//! context.
//!
//! All types here are immutable after construction; [`Environment`] updates
//! are functional and return a new environment.

use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::expr::TemplateExpr;

/// Name of the reserved environment entry holding the background context.
pub const CONTEXT_VAR: &str = "context";

/// A numeric value: integers are exact (within `i64`), everything else is a
/// double. The two variants never compare equal structurally; expression
/// evaluation coerces where arithmetic needs it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Number {
    Int(i64),
    Float(f64),
}

impl Number {
    pub fn as_f64(self) -> f64 {
        match self {
            Number::Int(i) => i as f64,
            Number::Float(f) => f,
        }
    }
}

/// A runtime value: the JSON universe plus closures.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Null,
    Bool(bool),
    Num(Number),
    Str(String),
    Array(Vec<Value>),
    Object(IndexMap<String, Value>),
    Closure(Arc<Closure>),
}

impl Value {
    pub fn int(i: i64) -> Value {
        Value::Num(Number::Int(i))
    }

    pub fn float(f: f64) -> Value {
        Value::Num(Number::Float(f))
    }

    pub fn str(s: impl Into<String>) -> Value {
        Value::Str(s.into())
    }

    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Null => "null",
            Value::Bool(_) => "bool",
            Value::Num(Number::Int(_)) => "int",
            Value::Num(Number::Float(_)) => "float",
            Value::Str(_) => "string",
            Value::Array(_) => "array",
            Value::Object(_) => "object",
            Value::Closure(_) => "function",
        }
    }

    /// True if this value or anything inside it is a closure, in which case
    /// it cannot be serialized.
    pub fn contains_closure(&self) -> bool {
        match self {
            Value::Closure(_) => true,
            Value::Array(items) => items.iter().any(Value::contains_closure),
            Value::Object(fields) => fields.values().any(Value::contains_closure),
            _ => false,
        }
    }
}

/// A function value: parameter list (names with optional type), body program,
/// and the environment captured at definition time.
#[derive(Debug, Clone, PartialEq)]
pub struct Closure {
    pub params: IndexMap<String, Option<TypeSpec>>,
    pub body: Program,
    pub captured: Environment,
}

/// One role-tagged message of the background context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: String,
    pub content: String,
}

impl Message {
    pub fn new(role: impl Into<String>, content: impl Into<String>) -> Self {
        Message { role: role.into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Message::new("user", content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Message::new("assistant", content)
    }
}

/// The messages a block appends to the background context. Flattening a
/// contribution (concatenating message contents in order) recovers the
/// plain-string view of the context.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Contribution(pub Vec<Message>);

impl Contribution {
    pub fn empty() -> Self {
        Contribution(Vec::new())
    }

    pub fn one(message: Message) -> Self {
        Contribution(vec![message])
    }

    pub fn flatten(&self) -> String {
        flatten(self)
    }

    pub fn concat(&self, other: &Contribution) -> Contribution {
        let mut messages = self.0.clone();
        messages.extend(other.0.iter().cloned());
        Contribution(messages)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Concatenation of message contents, in order. The empty contribution
/// flattens to the empty string.
pub fn flatten(contribution: &Contribution) -> String {
    let mut out = String::new();
    for m in &contribution.0 {
        out.push_str(&m.content);
    }
    out
}

/// One environment entry: the value bound to a name and the contribution the
/// defining block produced.
#[derive(Debug, Clone, PartialEq)]
pub struct Binding {
    pub value: Value,
    pub contribution: Contribution,
}

impl Binding {
    pub fn new(value: Value, contribution: Contribution) -> Self {
        Binding { value, contribution }
    }
}

/// Ordered mapping from names to bindings. The name `context` is reserved
/// and always bound; its value is the flattened string of its contribution,
/// kept in lockstep by the update operations.
///
/// Updates are functional: `bind` and the context operations return a new
/// environment and never mutate the receiver.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    bindings: IndexMap<String, Binding>,
}

impl Environment {
    /// Environment containing only the reserved context entry.
    pub fn initial(context: Vec<Message>) -> Self {
        let env = Environment { bindings: IndexMap::new() };
        env.with_context(context)
    }

    pub fn lookup(&self, name: &str) -> Option<&Binding> {
        self.bindings.get(name)
    }

    pub fn bind(&self, name: impl Into<String>, binding: Binding) -> Environment {
        let mut bindings = self.bindings.clone();
        bindings.insert(name.into(), binding);
        Environment { bindings }
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.bindings.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Binding)> {
        self.bindings.iter().map(|(k, v)| (k.as_str(), v))
    }

    /// The reserved context binding. Present by construction.
    pub fn context(&self) -> &Binding {
        self.bindings.get(CONTEXT_VAR).expect("environment lost its context binding")
    }

    pub fn context_messages(&self) -> &[Message] {
        &self.context().contribution.0
    }

    /// Replace the background context, keeping value and message views in
    /// lockstep.
    pub fn with_context(&self, messages: Vec<Message>) -> Environment {
        let contribution = Contribution(messages);
        let value = Value::Str(contribution.flatten());
        self.bind(CONTEXT_VAR, Binding::new(value, contribution))
    }

    /// Remove a binding (used to scope loop variables). Removing the
    /// reserved context entry is a no-op.
    pub fn unbind(&self, name: &str) -> Environment {
        if name == CONTEXT_VAR {
            return self.clone();
        }
        let mut bindings = self.bindings.clone();
        bindings.shift_remove(name);
        Environment { bindings }
    }

    /// Append messages to the background context.
    pub fn append_context(&self, appended: &Contribution) -> Environment {
        if appended.is_empty() {
            return self.clone();
        }
        let mut messages = self.context().contribution.0.clone();
        messages.extend(appended.0.iter().cloned());
        self.with_context(messages)
    }
}

/// A PDL program: a block or a list of blocks.
#[derive(Debug, Clone, PartialEq)]
pub enum Program {
    Single(Box<Block>),
    List(Vec<Block>),
}

impl Program {
    pub fn single(block: Block) -> Program {
        Program::Single(Box::new(block))
    }
}

/// Which destinations a block's output reaches. Defaults to both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ContributeSet {
    pub result: bool,
    pub context: bool,
}

impl Default for ContributeSet {
    fn default() -> Self {
        ContributeSet { result: true, context: true }
    }
}

impl ContributeSet {
    pub fn none() -> Self {
        ContributeSet { result: false, context: false }
    }

    pub fn context_only() -> Self {
        ContributeSet { result: false, context: true }
    }

    pub fn result_only() -> Self {
        ContributeSet { result: true, context: false }
    }
}

/// How loop blocks combine per-iteration results.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum JoinMode {
    Text,
    Array,
    #[default]
    LastOf,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct JoinSpec {
    pub mode: JoinMode,
    /// Separator between iterations for text joins; never trailing.
    pub with: Option<String>,
}

/// Post-processors turning a block's flat string result into structured data.
#[derive(Debug, Clone, PartialEq)]
pub enum ParserKind {
    Json,
    Yaml,
    Jsonl,
    /// Full-string match; named capture groups become an object, unnamed
    /// groups an array.
    Regex {
        pattern: String,
    },
}

/// A JSON-Schema-subset type, used by the `spec:` keyword and function
/// parameters. `Obj` accepts any object.
#[derive(Debug, Clone, PartialEq)]
pub enum TypeSpec {
    Str,
    Bool,
    Int,
    Float,
    Null,
    Obj,
    Array(Box<TypeSpec>),
    /// Fields are required unless wrapped in `Optional`; extra fields are
    /// permitted and unchecked.
    Object(IndexMap<String, TypeSpec>),
    Enum(Vec<Value>),
    Optional(Box<TypeSpec>),
}

/// A block: one body plus the optional structured keywords every block kind
/// accepts.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub body: BlockBody,
    pub description: Option<String>,
    pub def: Option<String>,
    pub defs: IndexMap<String, Program>,
    pub role: Option<String>,
    pub contribute: ContributeSet,
    pub parser: Option<ParserKind>,
    pub spec: Option<TypeSpec>,
}

impl Block {
    /// A bare block carrying only a body, with all keywords at their
    /// defaults.
    pub fn leaf(body: BlockBody) -> Block {
        Block {
            body,
            description: None,
            def: None,
            defs: IndexMap::new(),
            role: None,
            contribute: ContributeSet::default(),
            parser: None,
            spec: None,
        }
    }
}

/// The `object:` body accepts either a field map or a list of blocks each
/// producing an object (merged left to right, later keys win).
#[derive(Debug, Clone, PartialEq)]
pub enum ObjectBody {
    Fields(IndexMap<String, Program>),
    Blocks(Program),
}

/// The sixteen block body kinds.
#[derive(Debug, Clone, PartialEq)]
pub enum BlockBody {
    /// A bare expression: string (possibly templated), number, or bool.
    Expr(TemplateExpr),
    Model {
        model: TemplateExpr,
        input: Option<Program>,
        parameters: Option<IndexMap<String, Value>>,
    },
    Read {
        file: Option<String>,
        message: Option<String>,
        multiline: bool,
    },
    Text(Program),
    LastOf(Program),
    Array(Program),
    Object(ObjectBody),
    Data {
        value: Value,
        raw: bool,
    },
    Include {
        file: String,
    },
    Function {
        params: IndexMap<String, Option<TypeSpec>>,
        body: Program,
    },
    Call {
        func: TemplateExpr,
        args: IndexMap<String, TemplateExpr>,
        /// `pdl_context:` — replaces the background context for the call.
        context: Option<Program>,
    },
    If {
        condition: TemplateExpr,
        then: Program,
        otherwise: Option<Program>,
    },
    For {
        bindings: IndexMap<String, TemplateExpr>,
        body: Program,
        join: JoinSpec,
    },
    Repeat {
        body: Program,
        count: TemplateExpr,
        join: JoinSpec,
    },
    RepeatUntil {
        body: Program,
        until: TemplateExpr,
        join: JoinSpec,
    },
    Code {
        source: Program,
        lang: String,
    },
}

impl BlockBody {
    /// The block kind as it appears in traces and error messages.
    pub fn kind_name(&self) -> &'static str {
        match self {
            BlockBody::Expr(_) => "expr",
            BlockBody::Model { .. } => "model",
            BlockBody::Read { .. } => "read",
            BlockBody::Text(_) => "text",
            BlockBody::LastOf(_) => "lastOf",
            BlockBody::Array(_) => "array",
            BlockBody::Object(_) => "object",
            BlockBody::Data { .. } => "data",
            BlockBody::Include { .. } => "include",
            BlockBody::Function { .. } => "function",
            BlockBody::Call { .. } => "call",
            BlockBody::If { .. } => "if",
            BlockBody::For { .. } => "for",
            BlockBody::Repeat { .. } => "repeat",
            BlockBody::RepeatUntil { .. } => "repeatUntil",
            BlockBody::Code { .. } => "code",
        }
    }
}

/// Default role for messages contributed by a block with no explicit or
/// inherited role: `assistant` for model blocks, `user` for everything else.
pub fn default_role(body: &BlockBody) -> &'static str {
    match body {
        BlockBody::Model { .. } => "assistant",
        _ => "user",
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::TemplateExpr;

    #[test]
    fn flatten_empty() {
        assert_eq!(flatten(&Contribution::empty()), "");
    }

    #[test]
    fn flatten_concatenates_contents() {
        let c = Contribution(vec![Message::user("ab"), Message::assistant("c")]);
        assert_eq!(flatten(&c), "abc");
    }

    #[test]
    fn flatten_chatbot_turn_one() {
        let c = Contribution(vec![
            Message::user("What is your query?\n"),
            Message::user("What's a language salad?"),
        ]);
        assert_eq!(flatten(&c), "What is your query?\nWhat's a language salad?");
    }

    #[test]
    fn flatten_is_monoid_homomorphism() {
        let a = Contribution(vec![Message::user("x"), Message::user("yz")]);
        let b = Contribution(vec![Message::assistant("w")]);
        assert_eq!(flatten(&a.concat(&b)), format!("{}{}", flatten(&a), flatten(&b)));
    }

    #[test]
    fn default_roles() {
        let model = BlockBody::Model {
            model: TemplateExpr::literal_str("mock:m"),
            input: None,
            parameters: None,
        };
        assert_eq!(default_role(&model), "assistant");
        let read = BlockBody::Read { file: None, message: None, multiline: false };
        assert_eq!(default_role(&read), "user");
        let leaf = BlockBody::Expr(TemplateExpr::literal_str("hi"));
        assert_eq!(default_role(&leaf), "user");
    }

    #[test]
    fn env_bind_then_lookup() {
        let env = Environment::initial(vec![]);
        let b = Binding::new(Value::str("v"), Contribution::one(Message::user("s")));
        let env2 = env.bind("x", b.clone());
        assert_eq!(env2.lookup("x"), Some(&b));
        assert_eq!(env.lookup("x"), None);
        assert!(env2.lookup(CONTEXT_VAR).is_some());
    }

    #[test]
    fn env_context_lockstep() {
        let env = Environment::initial(vec![Message::user("a")]);
        let env = env.append_context(&Contribution::one(Message::assistant("b")));
        let ctx = env.context();
        assert_eq!(ctx.value, Value::str("ab"));
        assert_eq!(ctx.contribution.0.len(), 2);
        assert_eq!(ctx.contribution.flatten(), "ab");
    }
}
