use std::collections::{BTreeMap, HashMap, HashSet};

use super::{
    Binding, CallNode, GflDocument, GflError, GflErrorKind, Namespace, Pipe, Root, Span,
    BINDING_PREFIX,
};
use crate::expr::{Expr, Literal};
use crate::flowline::{validate, Edge, Flowline, TaskNode, Violation};
use crate::registry;

fn is_ident_char(c: char) -> bool {
    c.is_alphanumeric() || c == '_'
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_alphabetic() || c == '_') && chars.all(is_ident_char)
}

/// Cursor over one line; offsets are absolute byte positions in the source.
struct Cursor<'a> {
    src: &'a str,
    line: &'a str,
    base: usize,
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn rest(&self) -> &'a str {
        &self.line[self.pos..]
    }

    fn abs(&self) -> usize {
        self.base + self.pos
    }

    fn span_here(&self, len: usize) -> Span {
        Span {
            start: self.abs(),
            end: self.abs() + len,
        }
    }

    fn err(&self, kind: GflErrorKind, message: impl Into<String>) -> GflError {
        let len = self.rest().chars().next().map(char::len_utf8).unwrap_or(0);
        GflError::at(self.src, kind, message, self.span_here(len))
    }

    fn skip_ws(&mut self) {
        let trimmed = self.rest().trim_start_matches(' ');
        self.pos = self.line.len() - trimmed.len();
    }

    fn eat(&mut self, s: &str) -> bool {
        if self.rest().starts_with(s) {
            self.pos += s.len();
            true
        } else {
            false
        }
    }

    fn ident(&mut self, what: &str) -> Result<String, GflError> {
        let rest = self.rest();
        let end = rest.find(|c: char| !is_ident_char(c)).unwrap_or(rest.len());
        let word = &rest[..end];
        if !is_ident(word) {
            return Err(self.err(GflErrorKind::Syntax, format!("expected {what}")));
        }
        self.pos += end;
        Ok(word.to_string())
    }

    fn at_end(&self) -> bool {
        self.rest().trim().is_empty()
    }
}

/// Parse a `-> a, b` list up to the end of the line, returning the names and
/// whether a trailing `:` followed.
fn parse_outputs(cur: &mut Cursor<'_>) -> Result<(Vec<String>, bool), GflError> {
    let mut rest = cur.rest().trim_end();
    let outlet = rest.ends_with(':');
    if outlet {
        rest = rest[..rest.len() - 1].trim_end();
    }
    let mut outputs = Vec::new();
    let mut offset = cur.pos;
    for part in rest.split(',') {
        let name = part.trim();
        let lead = part.len() - part.trim_start().len();
        let ok = !name.is_empty()
            && name.split('.').all(is_ident);
        if !ok {
            cur.pos = offset + lead;
            return Err(cur.err(GflErrorKind::Syntax, "expected an output name"));
        }
        outputs.push(name.to_string());
        offset += part.len() + 1;
    }
    cur.pos = cur.line.len();
    Ok((outputs, outlet))
}

/// Text between balanced parentheses starting at the cursor, which sits on `(`.
fn parse_parens(cur: &mut Cursor<'_>) -> Result<String, GflError> {
    let open = cur.abs();
    let rest = cur.rest();
    let mut depth = 0usize;
    let mut quote: Option<char> = None;
    let mut escaped = false;
    for (i, c) in rest.char_indices() {
        if let Some(q) = quote {
            if escaped {
                escaped = false;
            } else if c == '\\' {
                escaped = true;
            } else if c == q {
                quote = None;
            }
            continue;
        }
        match c {
            '"' | '\'' => quote = Some(c),
            '(' => depth += 1,
            ')' => {
                depth -= 1;
                if depth == 0 {
                    let inner = rest[1..i].trim().to_string();
                    cur.pos += i + 1;
                    return Ok(inner);
                }
            }
            _ => {}
        }
    }
    Err(GflError::at(
        cur.src,
        GflErrorKind::Lex,
        "unbalanced parentheses",
        Span {
            start: open,
            end: open + 1,
        },
    ))
}

/// `namespace.function[label](predicate) -> outputs:`
fn parse_call(cur: &mut Cursor<'_>) -> Result<CallNode, GflError> {
    let start = cur.abs();
    let ns_pos = cur.pos;
    let ns = cur.ident("a namespace")?;
    let namespace = match ns.as_str() {
        "model" => Namespace::Model,
        "opt" => Namespace::Opt,
        _ => {
            cur.pos = ns_pos;
            return Err(GflError::at(
                cur.src,
                GflErrorKind::UnknownNamespace,
                format!("unknown namespace `{ns}`"),
                cur.span_here(ns.len()),
            ));
        }
    };
    if !cur.eat(".") {
        return Err(cur.err(GflErrorKind::Syntax, "expected `.` after namespace"));
    }
    let function = cur.ident("a function name")?;
    let mut instance_label = None;
    if cur.rest().starts_with('[') {
        let open = cur.span_here(1);
        cur.pos += 1;
        let Some(close) = cur.rest().find(']') else {
            return Err(GflError::at(cur.src, GflErrorKind::Lex, "unbalanced brackets", open));
        };
        let label = cur.rest()[..close].trim();
        if !is_ident(label) {
            return Err(cur.err(GflErrorKind::Syntax, "instance label must be an identifier"));
        }
        instance_label = Some(label.to_string());
        cur.pos += close + 1;
    }
    cur.skip_ws();
    let mut predicate = None;
    if cur.rest().starts_with('(') {
        predicate = Some(parse_parens(cur)?);
        cur.skip_ws();
    }
    let mut outputs = Vec::new();
    let mut outlet = false;
    if cur.eat("->") {
        cur.skip_ws();
        (outputs, outlet) = parse_outputs(cur)?;
    } else if cur.rest().trim_end() == ":" {
        outlet = true;
        cur.pos = cur.line.len();
    }
    if !cur.at_end() {
        if cur.rest().starts_with(')') || cur.rest().starts_with(']') {
            return Err(cur.err(GflErrorKind::Lex, "unbalanced brackets"));
        }
        return Err(cur.err(
            GflErrorKind::Syntax,
            format!("unexpected `{}`", cur.rest().chars().next().unwrap_or(' ')),
        ));
    }
    Ok(CallNode {
        namespace,
        function,
        instance_label,
        predicate,
        outputs,
        outlet,
        span: Span {
            start,
            end: cur.base + cur.line.trim_end().len(),
        },
    })
}

/// Parse source text into its syntax tree without building the graph.
pub fn parse_document(text: &str) -> Result<GflDocument, GflError> {
    let mut definitions: Vec<Binding> = Vec::new();
    let mut root: Option<Root> = None;
    let mut pipes: Vec<Pipe> = Vec::new();
    // Most recent pipe index at each depth (index 0 unused).
    let mut open_at: Vec<Option<usize>> = vec![None];
    let mut unit: Option<usize> = None;

    let mut base = 0usize;
    for raw in text.split('\n') {
        let line_base = base;
        base += raw.len() + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        let content = line.trim_start_matches(' ');
        let indent = line.len() - content.len();
        if content.trim().is_empty() || content.starts_with('#') {
            continue;
        }
        if content.starts_with('\t') {
            return Err(GflError::at(
                text,
                GflErrorKind::Lex,
                "tabs are not allowed in indentation",
                Span {
                    start: line_base + indent,
                    end: line_base + indent + 1,
                },
            ));
        }
        let mut cur = Cursor {
            src: text,
            line,
            base: line_base,
            pos: indent,
        };
        let depth = if indent == 0 {
            0
        } else {
            if indent % 4 != 0 {
                return Err(GflError::at(
                    text,
                    GflErrorKind::Lex,
                    "bad indentation: not a multiple of 4 spaces",
                    Span {
                        start: line_base,
                        end: line_base + indent,
                    },
                ));
            }
            let u = *unit.get_or_insert(indent);
            if indent % u != 0 {
                return Err(GflError::at(
                    text,
                    GflErrorKind::Lex,
                    format!("bad indentation: expected a multiple of {u} spaces"),
                    Span {
                        start: line_base,
                        end: line_base + indent,
                    },
                ));
            }
            indent / u
        };

        if depth == 0 {
            if let Some(rest) = content.strip_prefix(':') {
                if root.is_some() {
                    return Err(cur.err(GflErrorKind::Syntax, "second entry `:`"));
                }
                cur.pos += 1;
                root = Some(parse_root(&mut cur, rest)?);
                continue;
            }
            if content.starts_with('|') {
                return Err(cur.err(GflErrorKind::Lex, "bad indentation: pipe at top level"));
            }
            // `name := literal`
            let name = cur.ident("a binding or `:entry`")?;
            cur.skip_ws();
            if !cur.eat(":=") {
                return Err(cur.err(GflErrorKind::Syntax, "expected `:=`"));
            }
            if root.is_some() {
                return Err(GflError::at(
                    text,
                    GflErrorKind::Syntax,
                    "bindings must precede the entry",
                    Span {
                        start: line_base,
                        end: line_base + name.len(),
                    },
                ));
            }
            cur.skip_ws();
            let lit_start = cur.abs();
            let value = Literal::parse(cur.rest().trim_end()).map_err(|e| {
                GflError::at(
                    text,
                    GflErrorKind::Syntax,
                    format!("bad literal: {}", e.message),
                    Span {
                        start: lit_start + e.offset,
                        end: lit_start + e.offset + 1,
                    },
                )
            })?;
            let span = Span {
                start: line_base,
                end: line_base + line.trim_end().len(),
            };
            if definitions.iter().any(|b| b.name == name) {
                return Err(GflError::at(
                    text,
                    GflErrorKind::Conflict,
                    format!("binding `{name}` defined twice"),
                    span,
                ));
            }
            if registry::resolve_column(&name).is_some() {
                return Err(GflError::at(
                    text,
                    GflErrorKind::Conflict,
                    format!("binding `{name}` shadows a column name"),
                    span,
                ));
            }
            definitions.push(Binding { name, value, span });
            continue;
        }

        if root.is_none() {
            return Err(cur.err(GflErrorKind::Syntax, "pipe before the entry `:`"));
        }
        if !cur.eat("|") {
            return Err(cur.err(GflErrorKind::Syntax, "expected `|`"));
        }
        if depth > open_at.len() {
            return Err(GflError::at(
                text,
                GflErrorKind::Lex,
                "bad indentation: nested too deeply",
                Span {
                    start: line_base,
                    end: line_base + indent,
                },
            ));
        }
        cur.skip_ws();
        let call = parse_call(&mut cur)?;
        let parent = if depth == 1 { None } else { open_at[depth - 1] };
        if depth > 1 && parent.is_none() {
            return Err(GflError::at(
                text,
                GflErrorKind::Lex,
                "bad indentation: nested too deeply",
                Span {
                    start: line_base,
                    end: line_base + indent,
                },
            ));
        }
        pipes.push(Pipe {
            depth,
            parent,
            call,
        });
        open_at.truncate(depth);
        open_at.push(Some(pipes.len() - 1));
    }

    let Some(root) = root else {
        return Err(GflError::at(
            text,
            GflErrorKind::Syntax,
            "missing entry `:`",
            Span {
                start: text.len(),
                end: text.len(),
            },
        ));
    };
    Ok(GflDocument {
        definitions,
        root,
        pipes,
    })
}

fn parse_root(cur: &mut Cursor<'_>, rest: &str) -> Result<Root, GflError> {
    let head_len = rest.find(|c: char| !is_ident_char(c)).unwrap_or(rest.len());
    if rest[head_len..].starts_with('.') {
        let call = parse_call(cur)?;
        return Ok(Root::Call(call));
    }
    let start = cur.abs() - 1;
    let name = cur.ident("an entry name")?;
    cur.skip_ws();
    let mut outputs = Vec::new();
    if cur.eat("->") {
        cur.skip_ws();
        let (outs, outlet) = parse_outputs(cur)?;
        if outlet {
            return Err(cur.err(GflErrorKind::Syntax, "the entry cannot be the outlet"));
        }
        outputs = outs;
    }
    if !cur.at_end() {
        return Err(cur.err(GflErrorKind::Syntax, "unexpected text after entry"));
    }
    Ok(Root::Source {
        name,
        outputs,
        span: Span {
            start,
            end: cur.base + cur.line.trim_end().len(),
        },
    })
}

struct Lowering<'a> {
    text: &'a str,
    bindings: HashSet<String>,
    vertices: Vec<TaskNode>,
    /// id -> (vertex index, namespace, first span)
    ids: HashMap<String, (usize, Option<Namespace>, Span)>,
    edges: Vec<Edge>,
}

impl Lowering<'_> {
    fn err(&self, kind: GflErrorKind, message: impl Into<String>, span: Span) -> GflError {
        GflError::at(self.text, kind, message, span)
    }

    /// Vertex for a call, merging repeated occurrences.
    fn vertex(&mut self, call: &CallNode) -> Result<usize, GflError> {
        let id = call.id().to_string();
        let (index, fresh) = match self.ids.get(&id) {
            Some(&(index, ns, _)) => {
                let existing = &self.vertices[index];
                if ns != Some(call.namespace) || existing.function != call.function {
                    let was = match ns {
                        Some(ns) => format!("{}.{}", ns.as_str(), existing.function),
                        None => "the entry".to_string(),
                    };
                    return Err(self.err(
                        GflErrorKind::LabelConflict,
                        format!("label conflict: `{id}` already denotes {was}"),
                        call.span,
                    ));
                }
                (index, false)
            }
            None => {
                let node = match call.namespace {
                    Namespace::Model => TaskNode::model(&id, &call.function),
                    Namespace::Opt => TaskNode::operator(&id, &call.function),
                };
                self.vertices.push(node);
                let index = self.vertices.len() - 1;
                self.ids
                    .insert(id.clone(), (index, Some(call.namespace), call.span));
                (index, true)
            }
        };

        if let Some(pred) = &call.predicate {
            let config = self.call_config(call, pred)?;
            let node = &self.vertices[index];
            let existing: BTreeMap<String, String> = node
                .config
                .iter()
                .filter(|(k, _)| !k.starts_with(BINDING_PREFIX))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect();
            if !fresh && !existing.is_empty() && existing != config {
                return Err(self.err(
                    GflErrorKind::Conflict,
                    format!("conflicting arguments for `{id}`"),
                    call.span,
                ));
            }
            self.vertices[index].config.extend(config);
        }
        if !call.outputs.is_empty() {
            let node = &mut self.vertices[index];
            if !node.outputs.is_empty() && node.outputs != call.outputs {
                return Err(self.err(
                    GflErrorKind::Conflict,
                    format!("conflicting outputs for `{id}`"),
                    call.span,
                ));
            }
            node.outputs = call.outputs.clone();
        }
        Ok(index)
    }

    fn call_config(
        &self,
        call: &CallNode,
        text: &str,
    ) -> Result<BTreeMap<String, String>, GflError> {
        let mut config = BTreeMap::new();
        let inner_start = call.span.start
            + self.text[call.span.start..call.span.end]
                .find('(')
                .map(|i| i + 1)
                .unwrap_or(0);
        if call.namespace == Namespace::Opt && call.function == "filter" {
            let expr = Expr::parse(text).map_err(|e| {
                self.err(
                    GflErrorKind::Syntax,
                    format!("bad predicate: {}", e.message),
                    Span {
                        start: inner_start + e.offset,
                        end: inner_start + e.offset + 1,
                    },
                )
            })?;
            for name in expr.identifiers() {
                if registry::resolve_column(&name).is_none() && !self.bindings.contains(&name) {
                    return Err(self.err(
                        GflErrorKind::Undefined,
                        format!("undefined name `{name}`"),
                        call.span,
                    ));
                }
            }
            config.insert("predicate".to_string(), text.to_string());
            return Ok(config);
        }
        for (key, value) in parse_args(text).map_err(|m| self.err(GflErrorKind::Syntax, m, call.span))? {
            config.insert(key, value.to_string());
        }
        Ok(config)
    }
}

/// `key=literal, key=literal` argument lists.
fn parse_args(text: &str) -> Result<Vec<(String, Literal)>, String> {
    let mut out = Vec::new();
    if text.trim().is_empty() {
        return Ok(out);
    }
    let mut parts = Vec::new();
    let (mut depth, mut quote, mut start) = (0i32, None::<char>, 0usize);
    for (i, c) in text.char_indices() {
        match (quote, c) {
            (Some(q), c) if c == q => quote = None,
            (Some(_), _) => {}
            (None, '"' | '\'') => quote = Some(c),
            (None, '[' | '(') => depth += 1,
            (None, ']' | ')') => depth -= 1,
            (None, ',') if depth == 0 => {
                parts.push(&text[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    parts.push(&text[start..]);
    for part in parts {
        let Some((key, value)) = part.split_once('=') else {
            return Err(format!("expected `key=value` in `{}`", part.trim()));
        };
        let key = key.trim();
        if !is_ident(key) {
            return Err(format!("bad argument name `{key}`"));
        }
        let value = Literal::parse(value.trim()).map_err(|e| format!("bad argument `{key}`: {}", e.message))?;
        out.push((key.to_string(), value));
    }
    Ok(out)
}

/// Parse and validate a flowline.
pub fn parse(text: &str) -> Result<Flowline, GflError> {
    let doc = parse_document(text)?;
    let mut lower = Lowering {
        text,
        bindings: doc.definitions.iter().map(|b| b.name.clone()).collect(),
        vertices: Vec::new(),
        ids: HashMap::new(),
        edges: Vec::new(),
    };

    let (root_index, root_span) = match &doc.root {
        Root::Source {
            name,
            outputs,
            span,
        } => {
            let mut node = TaskNode::start(name);
            node.outputs = outputs.clone();
            lower.vertices.push(node);
            lower.ids.insert(name.clone(), (0, None, *span));
            (0, *span)
        }
        Root::Call(call) => (lower.vertex(call)?, call.span),
    };
    for b in &doc.definitions {
        lower.vertices[root_index]
            .config
            .insert(format!("{BINDING_PREFIX}{}", b.name), b.value.to_string());
    }

    let mut pipe_vertex = Vec::with_capacity(doc.pipes.len());
    let mut outlet: Option<(usize, Span)> = match &doc.root {
        Root::Call(call) if call.outlet => Some((root_index, call.span)),
        _ => None,
    };
    let mut seen_edges = HashSet::new();
    let has_children: HashSet<usize> = doc.pipes.iter().filter_map(|p| p.parent).collect();
    for (i, pipe) in doc.pipes.iter().enumerate() {
        let known = lower.ids.contains_key(pipe.call.id());
        let v = lower.vertex(&pipe.call)?;
        pipe_vertex.push(v);
        // A top-level repeat of a known vertex that carries its own pipes
        // only continues that vertex; it is not fed by the entry.
        let anchor = pipe.parent.is_none() && known && has_children.contains(&i);
        if !anchor {
            let parent = pipe.parent.map(|p| pipe_vertex[p]).unwrap_or(root_index);
            let edge = Edge::new(
                lower.vertices[parent].id.clone(),
                lower.vertices[v].id.clone(),
            );
            if seen_edges.insert(edge.clone()) {
                lower.edges.push(edge);
            }
        }
        if pipe.call.outlet {
            match outlet {
                Some((o, _)) if o != v => {
                    return Err(lower.err(
                        GflErrorKind::Syntax,
                        "more than one outlet `:`",
                        pipe.call.span,
                    ))
                }
                _ => outlet = Some((v, pipe.call.span)),
            }
        }
    }

    let exit = match outlet {
        Some((v, _)) => v,
        None if doc.pipes.is_empty() => root_index,
        None => {
            return Err(lower.err(
                GflErrorKind::Syntax,
                "missing outlet: no call ends with `:`",
                Span {
                    start: text.len(),
                    end: text.len(),
                },
            ))
        }
    };

    let flowline = Flowline {
        entry: lower.vertices[root_index].id.clone(),
        exit: lower.vertices[exit].id.clone(),
        vertices: lower.vertices,
        edges: lower.edges,
    };
    let report = validate(&flowline);
    if report.is_ok() {
        return Ok(flowline);
    }
    let span = report
        .violations
        .iter()
        .find_map(|v| violation_vertex(v).and_then(|id| lower.ids.get(id)).map(|e| e.2))
        .unwrap_or(root_span);
    let mut err = GflError::at(
        text,
        GflErrorKind::Invalid,
        format!("invalid flowline: {report}"),
        span,
    );
    err.report = Some(report);
    Err(err)
}

fn violation_vertex(v: &Violation) -> Option<&str> {
    match v {
        Violation::Cycle { vertices }
        | Violation::MultipleEntries { vertices }
        | Violation::MultipleExits { vertices } => vertices.first().map(String::as_str),
        Violation::DuplicateId { id }
        | Violation::Unreachable { id }
        | Violation::DeadEnd { id }
        | Violation::ResourceClass { id }
        | Violation::UnknownOperator { id, .. }
        | Violation::BadPredicate { id, .. }
        | Violation::MissingWeight { id }
        | Violation::NegativeWeight { id } => Some(id),
        Violation::TypeIncompatiblePipe { to, .. } => Some(to),
        Violation::DanglingEdge { to, .. } => Some(to),
        Violation::EntryMismatch { actual, .. } | Violation::ExitMismatch { actual, .. } => {
            Some(actual)
        }
        Violation::UnknownProfileEdge { .. } | Violation::Empty | Violation::NoEntry | Violation::NoExit => None,
    }
}
