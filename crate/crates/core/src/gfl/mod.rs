//! The textual flowline language.
//!
//! ```text
//! filtered_ent := []
//! :data
//!     | model.BertNER -> ent, ent_t
//!         | opt.filter[f](ent_t in filtered_ent)
//!             | opt.triple:
//! ```
//!
//! `name := literal` defines a binding, `:name` opens the pipeline at a data
//! source, `|` pipes the enclosing call into a nested one and a trailing `:`
//! marks the outlet. Calls with the same `namespace.function[label]` denote a
//! single vertex.

mod dot;
mod format;
mod parser;

use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::expr::Literal;
use crate::flowline::ValidationReport;

pub use dot::emit_dot;
pub use format::format;
pub use parser::{parse, parse_document};

/// Byte range into the source text.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GflErrorKind {
    Lex,
    Syntax,
    UnknownNamespace,
    LabelConflict,
    Undefined,
    Conflict,
    Invalid,
}

#[derive(Debug, Clone, PartialEq, Error, Serialize)]
pub struct GflError {
    pub kind: GflErrorKind,
    pub message: String,
    pub span: Span,
    /// 1-based.
    pub line: usize,
    /// 1-based, in characters.
    pub column: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<ValidationReport>,
}

impl fmt::Display for GflError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}: {}", self.line, self.column, self.message)
    }
}

impl GflError {
    pub(crate) fn at(text: &str, kind: GflErrorKind, message: impl Into<String>, span: Span) -> Self {
        let start = span.start.min(text.len());
        let before = &text[..start];
        let line = before.matches('\n').count() + 1;
        let line_start = before.rfind('\n').map(|i| i + 1).unwrap_or(0);
        let column = text[line_start..start].chars().count() + 1;
        GflError {
            kind,
            message: message.into(),
            span: Span {
                start,
                end: span.end.clamp(start, text.len()),
            },
            line,
            column,
            report: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Namespace {
    Model,
    Opt,
}

impl Namespace {
    pub fn as_str(self) -> &'static str {
        match self {
            Namespace::Model => "model",
            Namespace::Opt => "opt",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Binding {
    pub name: String,
    pub value: Literal,
    pub span: Span,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CallNode {
    pub namespace: Namespace,
    pub function: String,
    pub instance_label: Option<String>,
    /// Raw text between the parentheses.
    pub predicate: Option<String>,
    pub outputs: Vec<String>,
    /// Trailing `:`.
    pub outlet: bool,
    pub span: Span,
}

impl CallNode {
    /// Vertex id: the instance label when present, else the function name.
    pub fn id(&self) -> &str {
        self.instance_label.as_deref().unwrap_or(&self.function)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Root {
    Source {
        name: String,
        outputs: Vec<String>,
        span: Span,
    },
    Call(CallNode),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pipe {
    /// Nesting depth; top-level pipes have depth 1.
    pub depth: usize,
    /// Index of the enclosing pipe, `None` for the root.
    pub parent: Option<usize>,
    pub call: CallNode,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GflDocument {
    pub definitions: Vec<Binding>,
    pub root: Root,
    pub pipes: Vec<Pipe>,
}

/// Config key prefix under which bindings are stored on the entry vertex.
pub const BINDING_PREFIX: &str = "let.";
