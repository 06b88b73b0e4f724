//! Predicate expressions used inside `(...)` of flowline calls.
//!
//! The language is deliberately tiny: identifiers, string/number/bool
//! literals, list literals, `==`, `!=`, `in`, `not in`, `and`, `or` and
//! parentheses.

use std::fmt;

use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at offset {offset}")]
pub struct ExprError {
    pub message: String,
    /// Byte offset into the expression text.
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Literal {
    Str(String),
    Num(f64),
    Bool(bool),
    List(Vec<Literal>),
}

impl Literal {
    pub fn as_str(&self) -> Option<&str> {
        match self {
            Literal::Str(s) => Some(s),
            _ => None,
        }
    }

    pub fn as_num(&self) -> Option<f64> {
        match self {
            Literal::Num(n) => Some(*n),
            _ => None,
        }
    }

    pub fn as_list(&self) -> Option<&[Literal]> {
        match self {
            Literal::List(l) => Some(l),
            _ => None,
        }
    }

    /// Parse a standalone literal, e.g. the right side of a `name := ...` binding.
    pub fn parse(text: &str) -> Result<Literal, ExprError> {
        match Expr::parse(text)? {
            Expr::Lit(lit) => Ok(lit),
            _ => Err(ExprError {
                message: "expected a literal".into(),
                offset: 0,
            }),
        }
    }
}

impl fmt::Display for Literal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Literal::Str(s) => {
                f.write_str("\"")?;
                for ch in s.chars() {
                    match ch {
                        '"' => f.write_str("\\\"")?,
                        '\\' => f.write_str("\\\\")?,
                        c => write!(f, "{c}")?,
                    }
                }
                f.write_str("\"")
            }
            Literal::Num(n) => write!(f, "{n}"),
            Literal::Bool(b) => write!(f, "{b}"),
            Literal::List(items) => {
                f.write_str("[")?;
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{item}")?;
                }
                f.write_str("]")
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Eq,
    Ne,
    In,
    NotIn,
    And,
    Or,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Lit(Literal),
    Ident(String),
    Binary(Box<Expr>, BinOp, Box<Expr>),
}

/// Identifier lookup used during evaluation.
pub trait Env {
    fn lookup(&self, name: &str) -> Option<Literal>;
}

impl<F> Env for F
where
    F: Fn(&str) -> Option<Literal>,
{
    fn lookup(&self, name: &str) -> Option<Literal> {
        self(name)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Ident(String),
    Str(String),
    Num(f64),
    LBracket,
    RBracket,
    LParen,
    RParen,
    Comma,
    EqEq,
    NotEq,
}

fn tokenize(text: &str) -> Result<Vec<(Tok, usize)>, ExprError> {
    let mut out = Vec::new();
    let bytes: Vec<(usize, char)> = text.char_indices().collect();
    let mut i = 0;
    let err = |message: &str, offset: usize| ExprError {
        message: message.into(),
        offset,
    };
    while i < bytes.len() {
        let (pos, ch) = bytes[i];
        match ch {
            c if c.is_whitespace() => i += 1,
            '[' => {
                out.push((Tok::LBracket, pos));
                i += 1;
            }
            ']' => {
                out.push((Tok::RBracket, pos));
                i += 1;
            }
            '(' => {
                out.push((Tok::LParen, pos));
                i += 1;
            }
            ')' => {
                out.push((Tok::RParen, pos));
                i += 1;
            }
            ',' => {
                out.push((Tok::Comma, pos));
                i += 1;
            }
            '=' | '!' => {
                if bytes.get(i + 1).map(|b| b.1) == Some('=') {
                    out.push((if ch == '=' { Tok::EqEq } else { Tok::NotEq }, pos));
                    i += 2;
                } else {
                    return Err(err("expected `==` or `!=`", pos));
                }
            }
            '"' | '\'' => {
                let quote = ch;
                let mut s = String::new();
                i += 1;
                loop {
                    let Some(&(_, c)) = bytes.get(i) else {
                        return Err(err("unterminated string", pos));
                    };
                    i += 1;
                    if c == quote {
                        break;
                    }
                    if c == '\\' {
                        let Some(&(_, esc)) = bytes.get(i) else {
                            return Err(err("unterminated string", pos));
                        };
                        i += 1;
                        s.push(esc);
                    } else {
                        s.push(c);
                    }
                }
                out.push((Tok::Str(s), pos));
            }
            c if c.is_ascii_digit() || c == '-' => {
                let start = i;
                i += 1;
                while i < bytes.len()
                    && (bytes[i].1.is_ascii_digit()
                        || bytes[i].1 == '.'
                        || bytes[i].1 == 'e'
                        || bytes[i].1 == 'E')
                {
                    i += 1;
                }
                let end = bytes.get(i).map(|b| b.0).unwrap_or(text.len());
                let lit = &text[bytes[start].0..end];
                let n: f64 = lit.parse().map_err(|_| err("bad number", pos))?;
                out.push((Tok::Num(n), pos));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < bytes.len()
                    && (bytes[i].1.is_alphanumeric() || bytes[i].1 == '_' || bytes[i].1 == '.')
                {
                    i += 1;
                }
                let end = bytes.get(i).map(|b| b.0).unwrap_or(text.len());
                out.push((Tok::Ident(text[bytes[start].0..end].to_string()), pos));
            }
            _ => return Err(err(&format!("unexpected character `{ch}`"), pos)),
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(Tok, usize)>,
    pos: usize,
    len: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.0)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|t| t.1).unwrap_or(self.len)
    }

    fn err(&self, message: &str) -> ExprError {
        ExprError {
            message: message.into(),
            offset: self.offset(),
        }
    }

    fn keyword(&self, kw: &str) -> bool {
        matches!(self.peek(), Some(Tok::Ident(s)) if s == kw)
    }

    fn or(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.and()?;
        while self.keyword("or") {
            self.pos += 1;
            let rhs = self.and()?;
            lhs = Expr::Binary(Box::new(lhs), BinOp::Or, Box::new(rhs));
        }
        Ok(lhs)
    }

    fn and(&mut self) -> Result<Expr, ExprError> {
        let mut lhs = self.cmp()?;
        while self.keyword("and") {
            self.pos += 1;
            let rhs = self.cmp()?;
            lhs = Expr::Binary(Box::new(lhs), BinOp::And, Box::new(rhs));
        }
        Ok(lhs)
    }

    fn cmp(&mut self) -> Result<Expr, ExprError> {
        let lhs = self.primary()?;
        let op = match self.peek() {
            Some(Tok::EqEq) => BinOp::Eq,
            Some(Tok::NotEq) => BinOp::Ne,
            Some(Tok::Ident(s)) if s == "in" => BinOp::In,
            Some(Tok::Ident(s)) if s == "not" => {
                self.pos += 1;
                if !self.keyword("in") {
                    return Err(self.err("expected `in` after `not`"));
                }
                BinOp::NotIn
            }
            _ => return Ok(lhs),
        };
        self.pos += 1;
        let rhs = self.primary()?;
        Ok(Expr::Binary(Box::new(lhs), op, Box::new(rhs)))
    }

    fn primary(&mut self) -> Result<Expr, ExprError> {
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.or()?;
                if self.peek() != Some(&Tok::RParen) {
                    return Err(self.err("expected `)`"));
                }
                self.pos += 1;
                Ok(e)
            }
            Some(Tok::LBracket) => Ok(Expr::Lit(self.list()?)),
            Some(Tok::Str(s)) => {
                self.pos += 1;
                Ok(Expr::Lit(Literal::Str(s)))
            }
            Some(Tok::Num(n)) => {
                self.pos += 1;
                Ok(Expr::Lit(Literal::Num(n)))
            }
            Some(Tok::Ident(s)) => {
                if matches!(s.as_str(), "and" | "or" | "in" | "not") {
                    return Err(self.err(&format!("unexpected keyword `{s}`")));
                }
                self.pos += 1;
                Ok(match s.as_str() {
                    "true" => Expr::Lit(Literal::Bool(true)),
                    "false" => Expr::Lit(Literal::Bool(false)),
                    _ => Expr::Ident(s),
                })
            }
            _ => Err(self.err("expected an operand")),
        }
    }

    fn list(&mut self) -> Result<Literal, ExprError> {
        self.pos += 1;
        let mut items = Vec::new();
        if self.peek() == Some(&Tok::RBracket) {
            self.pos += 1;
            return Ok(Literal::List(items));
        }
        loop {
            match self.primary()? {
                Expr::Lit(l) => items.push(l),
                _ => return Err(self.err("list items must be literals")),
            }
            match self.peek() {
                Some(Tok::Comma) => self.pos += 1,
                Some(Tok::RBracket) => {
                    self.pos += 1;
                    return Ok(Literal::List(items));
                }
                _ => return Err(self.err("expected `,` or `]`")),
            }
        }
    }
}

impl Expr {
    pub fn parse(text: &str) -> Result<Expr, ExprError> {
        let toks = tokenize(text)?;
        let mut p = Parser {
            toks,
            pos: 0,
            len: text.len(),
        };
        let e = p.or()?;
        if p.pos != p.toks.len() {
            return Err(p.err("trailing input"));
        }
        Ok(e)
    }

    /// Identifiers in first-appearance order.
    pub fn identifiers(&self) -> Vec<String> {
        fn walk(e: &Expr, out: &mut Vec<String>) {
            match e {
                Expr::Lit(_) => {}
                Expr::Ident(s) => {
                    if !out.contains(s) {
                        out.push(s.clone());
                    }
                }
                Expr::Binary(l, _, r) => {
                    walk(l, out);
                    walk(r, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(self, &mut out);
        out
    }

    pub fn eval(&self, env: &dyn Env) -> Result<Literal, ExprError> {
        match self {
            Expr::Lit(l) => Ok(l.clone()),
            Expr::Ident(name) => env.lookup(name).ok_or_else(|| ExprError {
                message: format!("unbound identifier `{name}`"),
                offset: 0,
            }),
            Expr::Binary(l, op, r) => {
                let lv = l.eval(env)?;
                match op {
                    BinOp::And => {
                        if !truthy(&lv) {
                            return Ok(Literal::Bool(false));
                        }
                        Ok(Literal::Bool(truthy(&r.eval(env)?)))
                    }
                    BinOp::Or => {
                        if truthy(&lv) {
                            return Ok(Literal::Bool(true));
                        }
                        Ok(Literal::Bool(truthy(&r.eval(env)?)))
                    }
                    BinOp::Eq => Ok(Literal::Bool(lv == r.eval(env)?)),
                    BinOp::Ne => Ok(Literal::Bool(lv != r.eval(env)?)),
                    BinOp::In | BinOp::NotIn => {
                        let rv = r.eval(env)?;
                        let member = match &rv {
                            Literal::List(items) => items.contains(&lv),
                            Literal::Str(hay) => match &lv {
                                Literal::Str(needle) => hay.contains(needle.as_str()),
                                _ => false,
                            },
                            _ => {
                                return Err(ExprError {
                                    message: "right side of `in` must be a list or string"
                                        .into(),
                                    offset: 0,
                                })
                            }
                        };
                        Ok(Literal::Bool(if *op == BinOp::In { member } else { !member }))
                    }
                }
            }
        }
    }

    pub fn eval_bool(&self, env: &dyn Env) -> Result<bool, ExprError> {
        self.eval(env).map(|v| truthy(&v))
    }
}

fn truthy(v: &Literal) -> bool {
    match v {
        Literal::Bool(b) => *b,
        Literal::Num(n) => *n != 0.0,
        Literal::Str(s) => !s.is_empty(),
        Literal::List(l) => !l.is_empty(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn env(name: &str) -> Option<Literal> {
        match name {
            "ent_t" => Some(Literal::Str("PER".into())),
            "allowed" => Some(Literal::List(vec![
                Literal::Str("PER".into()),
                Literal::Str("ORG".into()),
            ])),
            "empty" => Some(Literal::List(vec![])),
            _ => None,
        }
    }

    #[test]
    fn membership() {
        let e = Expr::parse("ent_t in allowed").unwrap();
        assert!(e.eval_bool(&env).unwrap());
        let e = Expr::parse("ent_t not in allowed").unwrap();
        assert!(!e.eval_bool(&env).unwrap());
        let e = Expr::parse("ent_t in empty").unwrap();
        assert!(!e.eval_bool(&env).unwrap());
    }

    #[test]
    fn boolean_connectives() {
        let e = Expr::parse("ent_t == 'PER' and (ent_t != \"ORG\" or false)").unwrap();
        assert!(e.eval_bool(&env).unwrap());
        assert_eq!(e.identifiers(), vec!["ent_t".to_string()]);
    }

    #[test]
    fn literal_display_round_trips() {
        let lit = Literal::parse(r#"["PER", 'O"RG', 3, true, []]"#).unwrap();
        assert_eq!(Literal::parse(&lit.to_string()).unwrap(), lit);
    }

    #[test]
    fn errors_carry_offsets() {
        let err = Expr::parse("ent_t in [1, 2").unwrap_err();
        assert_eq!(err.offset, 14);
        let err = Expr::parse("ent_t = 3").unwrap_err();
        assert_eq!(err.offset, 6);
        assert!(Expr::parse("x not y").is_err());
    }

    #[test]
    fn unbound_identifier_is_an_error() {
        let e = Expr::parse("missing in allowed").unwrap();
        assert!(e.eval_bool(&env).is_err());
    }
}
