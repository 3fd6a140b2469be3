//! Diagnostics and document paths.
//!
//! Every error produced while checking or evaluating a document points into
//! the document with a [`DocPath`], a sequence of mapping keys and sequence
//! indices from the root.

use std::fmt;

use serde::{Deserialize, Serialize};

/// One step into a YAML/JSON document: a mapping key or a sequence index.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum PathSeg {
    Key(String),
    Index(usize),
}

/// Path from the document root to a node, rendered in JSON-pointer style
/// (`/0/repeat/text/1`). The empty path renders as `/`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default)]
pub struct DocPath(pub Vec<PathSeg>);

impl DocPath {
    pub fn root() -> Self {
        DocPath(Vec::new())
    }

    pub fn key(&self, k: impl Into<String>) -> Self {
        let mut segs = self.0.clone();
        segs.push(PathSeg::Key(k.into()));
        DocPath(segs)
    }

    pub fn index(&self, i: usize) -> Self {
        let mut segs = self.0.clone();
        segs.push(PathSeg::Index(i));
        DocPath(segs)
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for DocPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return write!(f, "/");
        }
        for seg in &self.0 {
            match seg {
                PathSeg::Key(k) => write!(f, "/{k}")?,
                PathSeg::Index(i) => write!(f, "/{i}")?,
            }
        }
        Ok(())
    }
}

impl Serialize for DocPath {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DocPath {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        let mut segs = Vec::new();
        for part in s.split('/').filter(|p| !p.is_empty()) {
            match part.parse::<usize>() {
                Ok(i) => segs.push(PathSeg::Index(i)),
                Err(_) => segs.push(PathSeg::Key(part.to_string())),
            }
        }
        Ok(DocPath(segs))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Severity {
    Error,
    Warning,
}

impl fmt::Display for Severity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Severity::Error => write!(f, "error"),
            Severity::Warning => write!(f, "warning"),
        }
    }
}

/// A problem found in a document, reported rather than thrown: validation
/// returns all diagnostics it can find in one pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub severity: Severity,
    pub path: DocPath,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub line: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub column: Option<usize>,
}

impl Diagnostic {
    pub fn error(path: DocPath, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Error,
            path,
            message: message.into(),
            line: None,
            column: None,
        }
    }

    pub fn warning(path: DocPath, message: impl Into<String>) -> Self {
        Diagnostic {
            severity: Severity::Warning,
            path,
            message: message.into(),
            line: None,
            column: None,
        }
    }

    pub fn at(mut self, line: usize, column: usize) -> Self {
        self.line = Some(line);
        self.column = Some(column);
        self
    }

    /// Render as `file:line:col: severity: message` (file and position
    /// omitted when unknown).
    pub fn render(&self, file: Option<&str>) -> String {
        let mut out = String::new();
        if let Some(f) = file {
            out.push_str(f);
            out.push(':');
            if let (Some(l), Some(c)) = (self.line, self.column) {
                out.push_str(&format!("{l}:{c}:"));
            }
            out.push(' ');
        }
        out.push_str(&format!("{}: {}", self.severity, self.message));
        if !self.path.is_root() {
            out.push_str(&format!(" (at {})", self.path));
        }
        out
    }
}

/// Smallest edit distance ≤ `max` between `word` and a candidate, if any.
/// Used to suggest fixes for misspelled keywords and type names.
pub fn nearest_candidate<'a>(
    word: &str,
    candidates: impl IntoIterator<Item = &'a str>,
    max: usize,
) -> Option<&'a str> {
    let mut best: Option<(usize, &str)> = None;
    for cand in candidates {
        let d = edit_distance(word, cand);
        if d <= max && best.is_none_or(|(bd, _)| d < bd) {
            best = Some((d, cand));
        }
    }
    best.map(|(_, c)| c)
}

fn edit_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let cost = usize::from(ca != cb);
            cur[j + 1] = (prev[j] + cost).min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn path_display() {
        let p = DocPath::root().index(0).key("repeat").index(1);
        assert_eq!(p.to_string(), "/0/repeat/1");
        assert_eq!(DocPath::root().to_string(), "/");
    }

    #[test]
    fn suggestions() {
        assert_eq!(nearest_candidate("strr", ["str", "bool", "int"], 2), Some("str"));
        assert_eq!(nearest_candidate("xyzzy", ["str", "bool"], 2), None);
    }

    #[test]
    fn render_with_position() {
        let d = Diagnostic::error(DocPath::root().index(1), "unknown keyword").at(3, 5);
        assert_eq!(d.render(Some("prog.pdl")), "prog.pdl:3:5: error: unknown keyword (at /1)");
    }
}
