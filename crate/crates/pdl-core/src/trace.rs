//! Execution traces: a nested record of each block's inputs, outputs, and
//! contributions, serialized as JSON for external display tools.
//!
//! Timing uses a deterministic step clock (one tick per block entry/exit)
//! rather than wall time, so two runs of the same program produce
//! byte-identical trace files.

use serde::{Deserialize, Serialize};

use crate::diag::DocPath;

pub const TRACE_SCHEMA_VERSION: &str = "pdl-trace/1";
const PREVIEW_LIMIT: usize = 2048;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceNode {
    pub kind: String,
    pub doc_path: DocPath,
    pub role: String,
    pub result_preview: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub result_truncated: bool,
    pub contribution_preview: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub contribution_truncated: bool,
    /// Deterministic step-clock ticks spent inside this block.
    pub timing: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub defs_bound: Vec<String>,
    /// The block's result parser, when one applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub parser: Option<String>,
    /// The block's type check, when one applied.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<TraceNode>,
}

/// A trace document: versioned schema plus the root node.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TraceDocument {
    pub version: String,
    pub root: TraceNode,
}

impl TraceDocument {
    pub fn new(root: TraceNode) -> Self {
        TraceDocument { version: TRACE_SCHEMA_VERSION.to_string(), root }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("trace serialization cannot fail")
    }
}

pub fn preview(text: &str) -> (String, bool) {
    if text.chars().count() <= PREVIEW_LIMIT {
        (text.to_string(), false)
    } else {
        let cut: String = text.chars().take(PREVIEW_LIMIT).collect();
        (format!("{cut}…"), true)
    }
}

struct OpenNode {
    kind: String,
    doc_path: DocPath,
    entered_at: u64,
    defs_bound: Vec<String>,
    parser: Option<String>,
    spec: Option<String>,
    children: Vec<TraceNode>,
}

/// Records the evaluation tree. Disabled builders cost nothing.
pub struct TraceBuilder {
    enabled: bool,
    clock: u64,
    stack: Vec<OpenNode>,
    roots: Vec<TraceNode>,
}

impl TraceBuilder {
    pub fn new(enabled: bool) -> Self {
        TraceBuilder { enabled, clock: 0, stack: Vec::new(), roots: Vec::new() }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn enter(&mut self, kind: &str, doc_path: &DocPath) {
        if !self.enabled {
            return;
        }
        self.clock += 1;
        self.stack.push(OpenNode {
            kind: kind.to_string(),
            doc_path: doc_path.clone(),
            entered_at: self.clock,
            defs_bound: Vec::new(),
            parser: None,
            spec: None,
            children: Vec::new(),
        });
    }

    pub fn record_def(&mut self, name: &str) {
        if let Some(open) = self.stack.last_mut() {
            open.defs_bound.push(name.to_string());
        }
    }

    /// Note the parser and type check the open block applies.
    pub fn annotate(&mut self, parser: Option<String>, spec: Option<String>) {
        if let Some(open) = self.stack.last_mut() {
            open.parser = parser;
            open.spec = spec;
        }
    }

    pub fn exit(&mut self, role: &str, result: &str, contribution: &str) {
        if !self.enabled {
            return;
        }
        self.clock += 1;
        let open = self.stack.pop().expect("trace exit without enter");
        let (result_preview, result_truncated) = preview(result);
        let (contribution_preview, contribution_truncated) = preview(contribution);
        let node = TraceNode {
            kind: open.kind,
            doc_path: open.doc_path,
            role: role.to_string(),
            result_preview,
            result_truncated,
            contribution_preview,
            contribution_truncated,
            timing: self.clock - open.entered_at,
            defs_bound: open.defs_bound,
            parser: open.parser,
            spec: open.spec,
            children: open.children,
        };
        match self.stack.last_mut() {
            Some(parent) => parent.children.push(node),
            None => self.roots.push(node),
        }
    }

    /// Abandon the open node on an error path so the partial trace stays
    /// well formed.
    pub fn abandon(&mut self) {
        if !self.enabled {
            return;
        }
        self.exit("", "<error>", "");
    }

    pub fn finish(mut self) -> Option<TraceNode> {
        if !self.enabled {
            return None;
        }
        while !self.stack.is_empty() {
            self.abandon();
        }
        match self.roots.len() {
            0 => None,
            1 => Some(self.roots.pop().unwrap()),
            _ => Some(TraceNode {
                kind: "program".to_string(),
                doc_path: DocPath::root(),
                role: String::new(),
                result_preview: String::new(),
                result_truncated: false,
                contribution_preview: String::new(),
                contribution_truncated: false,
                timing: self.clock,
                defs_bound: Vec::new(),
                parser: None,
                spec: None,
                children: self.roots,
            }),
        }
    }
}
