//! N-Triples export and import.
//!
//! Subjects and predicates become IRIs minted under a namespace prefix:
//! whitespace runs turn into `_` and everything outside the unreserved set is
//! percent-encoded. Objects of ontology attributes are written as plain
//! literals, all other objects as IRIs.

use std::collections::BTreeSet;
use std::fmt;

use percent_encoding::{utf8_percent_encode, AsciiSet, NON_ALPHANUMERIC};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ontology::Ontology;
use crate::record::Triple;

pub const DEFAULT_NAMESPACE: &str = "http://example.org/kg/";

const LOCAL: &AsciiSet = &NON_ALPHANUMERIC.remove(b'-').remove(b'.').remove(b'_').remove(b'~');

pub fn mint_iri(namespace: &str, name: &str) -> String {
    let joined = name.split_whitespace().collect::<Vec<_>>().join("_");
    format!("{namespace}{}", utf8_percent_encode(&joined, LOCAL))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Term {
    Iri(String),
    /// Lexical form plus any `@lang` or `^^<type>` suffix, verbatim.
    Literal(String, String),
}

impl fmt::Display for Term {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Term::Iri(i) => write!(f, "<{i}>"),
            Term::Literal(text, suffix) => {
                f.write_str("\"")?;
                for c in text.chars() {
                    match c {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        '\n' => f.write_str("\\n")?,
                        '\r' => f.write_str("\\r")?,
                        c => write!(f, "{c}")?,
                    }
                }
                write!(f, "\"{suffix}")
            }
        }
    }
}

/// A statement in RDF terms.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Statement {
    pub subject: Term,
    pub predicate: Term,
    pub object: Term,
}

impl fmt::Display for Statement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {} .", self.subject, self.predicate, self.object)
    }
}

/// RDF form of a surface triple under `namespace`.
pub fn canonical(triple: &Triple, namespace: &str, ontology: &Ontology) -> Statement {
    let object = if ontology.attribute(&triple.predicate).is_some() {
        Term::Literal(triple.object.clone(), String::new())
    } else {
        Term::Iri(mint_iri(namespace, &triple.object))
    };
    Statement {
        subject: Term::Iri(mint_iri(namespace, &triple.subject)),
        predicate: Term::Iri(mint_iri(namespace, &triple.predicate)),
        object,
    }
}

pub fn canonical_set<'a>(
    triples: impl IntoIterator<Item = &'a Triple>,
    namespace: &str,
    ontology: &Ontology,
) -> BTreeSet<Statement> {
    triples.into_iter().map(|t| canonical(t, namespace, ontology)).collect()
}

/// One line per statement, sorted.
pub fn write_ntriples(statements: &BTreeSet<Statement>) -> String {
    statements.iter().map(|s| format!("{s}\n")).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {message}")]
pub struct NTriplesError {
    pub line: usize,
    pub message: String,
}

struct Cursor<'a> {
    rest: &'a str,
}

impl<'a> Cursor<'a> {
    fn skip_ws(&mut self) {
        self.rest = self.rest.trim_start();
    }

    fn term(&mut self) -> Result<Term, String> {
        self.skip_ws();
        if let Some(body) = self.rest.strip_prefix('<') {
            let end = body.find('>').ok_or("unterminated IRI")?;
            self.rest = &body[end + 1..];
            return Ok(Term::Iri(body[..end].to_string()));
        }
        let Some(body) = self.rest.strip_prefix('"') else {
            return Err(format!("expected a term at `{}`", self.rest));
        };
        let mut text = String::new();
        let mut chars = body.char_indices();
        let close = loop {
            match chars.next() {
                None => return Err("unterminated literal".into()),
                Some((i, '"')) => break i,
                Some((_, '\\')) => match chars.next() {
                    Some((_, 'n')) => text.push('\n'),
                    Some((_, 'r')) => text.push('\r'),
                    Some((_, 't')) => text.push('\t'),
                    Some((_, c @ ('"' | '\\'))) => text.push(c),
                    _ => return Err("bad escape".into()),
                },
                Some((_, c)) => text.push(c),
            }
        };
        let after = &body[close + 1..];
        let suffix_len = if after.starts_with("^^<") {
            after.find('>').ok_or("unterminated datatype")? + 1
        } else if after.starts_with('@') {
            after.find(|c: char| c.is_whitespace() || c == '.').unwrap_or(after.len())
        } else {
            0
        };
        self.rest = &after[suffix_len..];
        Ok(Term::Literal(text, after[..suffix_len].to_string()))
    }
}

/// Parse statements, skipping blank lines and `#` comments.
pub fn parse_ntriples(text: &str) -> Result<BTreeSet<Statement>, NTriplesError> {
    let mut out = BTreeSet::new();
    for (i, line) in text.lines().enumerate() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |message: String| NTriplesError { line: i + 1, message };
        let mut c = Cursor { rest: trimmed };
        let subject = c.term().map_err(err)?;
        let predicate = c.term().map_err(err)?;
        let object = c.term().map_err(err)?;
        if matches!(subject, Term::Literal(..)) || matches!(predicate, Term::Literal(..)) {
            return Err(err("only objects may be literals".into()));
        }
        c.skip_ws();
        if c.rest != "." {
            return Err(err(format!("expected `.` at `{}`", c.rest)));
        }
        out.insert(Statement {
            subject,
            predicate,
            object,
        });
    }
    Ok(out)
}
