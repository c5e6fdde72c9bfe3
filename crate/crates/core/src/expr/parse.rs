//! Parser for the structured expression syntax.
//!
//! ```text
//! sum{Z} P(Y | Z, do(X)) P[tgt](Z)
//! prod(P(W2, W3), (E(Y | X=1, M, W3) - E(Y | X=0, M, W3)))
//! E{Y}(P(Y, M | X))
//! ```
//!
//! Juxtaposition multiplies, `/` divides, `-` subtracts. A `sum{..}` binds the
//! rest of the product it starts. In a slot, `M=m` and `M` both name the free
//! value of `M`; `M=1` fixes it.

use thiserror::Error;

use super::{ProbExpr, ProbTerm, Slot, Sym, Val, SOURCE, TARGET};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("position {pos}: {msg}")]
pub struct ExprParseError {
    pub pos: usize,
    pub msg: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    Ident(String),
    Int(u64),
    Punct(char),
}

fn lex(src: &str) -> Result<Vec<(usize, Tok)>, ExprParseError> {
    let chars: Vec<(usize, char)> = src.char_indices().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let (pos, c) = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].1.is_ascii_alphanumeric() || chars[i].1 == '_') {
                i += 1;
            }
            out.push((pos, Tok::Ident(chars[start..i].iter().map(|p| p.1).collect())));
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].1.is_ascii_digit() {
                i += 1;
            }
            let s: String = chars[start..i].iter().map(|p| p.1).collect();
            let n = s.parse().map_err(|_| ExprParseError { pos, msg: "integer out of range".into() })?;
            out.push((pos, Tok::Int(n)));
        } else if "()[]{}|,'=-/*".contains(c) {
            out.push((pos, Tok::Punct(c)));
            i += 1;
        } else {
            return Err(ExprParseError { pos, msg: format!("unexpected character `{c}`") });
        }
    }
    Ok(out)
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    at: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|t| &t.1)
    }

    fn peek2(&self) -> Option<&Tok> {
        self.toks.get(self.at + 1).map(|t| &t.1)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|t| t.0).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T, ExprParseError> {
        Err(ExprParseError { pos: self.pos(), msg: msg.into() })
    }

    fn is(&self, c: char) -> bool {
        self.peek() == Some(&Tok::Punct(c))
    }

    fn eat(&mut self, c: char) -> bool {
        if self.is(c) {
            self.at += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ExprParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn ident(&mut self) -> Result<String, ExprParseError> {
        match self.peek().cloned() {
            Some(Tok::Ident(s)) => {
                self.at += 1;
                Ok(s)
            }
            _ => self.err("expected a name"),
        }
    }

    fn primes(&mut self) -> u8 {
        let mut p = 0;
        while self.eat('\'') {
            p += 1;
        }
        p
    }

    fn expr(&mut self) -> Result<ProbExpr, ExprParseError> {
        let mut lhs = self.product()?;
        while self.eat('-') {
            let rhs = self.product()?;
            lhs = ProbExpr::difference(lhs, rhs);
        }
        Ok(lhs)
    }

    fn starts_atom(&self) -> bool {
        match self.peek() {
            Some(Tok::Int(_)) => true,
            Some(Tok::Punct('(')) => true,
            Some(Tok::Ident(s)) => matches!(
                (s.as_str(), self.peek2()),
                ("P" | "E", Some(Tok::Punct('(' | '[' | '*' | '{'))) | ("prod", Some(Tok::Punct('('))) | ("sum", Some(Tok::Punct('{')))
            ),
            _ => false,
        }
    }

    fn product(&mut self) -> Result<ProbExpr, ExprParseError> {
        let mut factors = vec![self.atom()?];
        loop {
            if self.eat('/') {
                let den = self.atom()?;
                let num = ProbExpr::product(std::mem::take(&mut factors));
                factors.push(ProbExpr::quotient(num, den));
            } else if self.starts_atom() {
                factors.push(self.atom()?);
            } else {
                break;
            }
        }
        Ok(ProbExpr::product(factors))
    }

    fn atom(&mut self) -> Result<ProbExpr, ExprParseError> {
        match self.peek().cloned() {
            Some(Tok::Int(n)) => {
                self.at += 1;
                Ok(ProbExpr::Const(n as i64))
            }
            Some(Tok::Punct('(')) => {
                self.at += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            Some(Tok::Ident(s)) => match s.as_str() {
                "prod" => {
                    self.at += 1;
                    self.expect('(')?;
                    let mut fs = vec![self.expr()?];
                    while self.eat(',') {
                        fs.push(self.expr()?);
                    }
                    self.expect(')')?;
                    Ok(ProbExpr::Product(fs))
                }
                "sum" => {
                    self.at += 1;
                    self.expect('{')?;
                    let mut over = Vec::new();
                    loop {
                        let node = self.ident()?;
                        over.push(Sym::primed(node, self.primes()));
                        if !self.eat(',') {
                            break;
                        }
                    }
                    self.expect('}')?;
                    let body = self.product()?;
                    Ok(ProbExpr::Sum { over, body: Box::new(body) })
                }
                "P" => {
                    self.at += 1;
                    let pop = self.pop_tag()?;
                    let t = self.term_body(pop)?;
                    Ok(ProbExpr::Term(t))
                }
                "E" => {
                    self.at += 1;
                    if self.eat('{') {
                        let node = self.ident()?;
                        let var = Sym::primed(node, self.primes());
                        self.expect('}')?;
                        self.expect('(')?;
                        let of = self.expr()?;
                        self.expect(')')?;
                        return Ok(ProbExpr::expectation(var, of));
                    }
                    let pop = self.pop_tag()?;
                    let t = self.term_body(pop)?;
                    if t.outcome.len() != 1 || t.outcome[0].val != Val::Sym(0) {
                        return self.err("expectation needs a single free outcome");
                    }
                    Ok(ProbExpr::expectation(Sym::new(t.outcome[0].node.clone()), ProbExpr::Term(t)))
                }
                _ => self.err(format!("unexpected name `{s}`")),
            },
            _ => self.err("expected an expression"),
        }
    }

    fn pop_tag(&mut self) -> Result<String, ExprParseError> {
        if self.eat('*') {
            return Ok(TARGET.to_string());
        }
        if self.eat('[') {
            let tag = self.ident()?;
            self.expect(']')?;
            return Ok(tag);
        }
        Ok(SOURCE.to_string())
    }

    fn slot(&mut self) -> Result<Slot, ExprParseError> {
        let node = self.ident()?;
        let p = self.primes();
        if self.eat('=') {
            match self.peek().cloned() {
                Some(Tok::Int(v)) => {
                    self.at += 1;
                    let v = u32::try_from(v).map_err(|_| ExprParseError { pos: self.pos(), msg: "value too large".into() })?;
                    Ok(Slot::fixed(node, v))
                }
                Some(Tok::Ident(_)) => {
                    self.at += 1;
                    let p = self.primes();
                    Ok(Slot { node, val: Val::Sym(p) })
                }
                _ => self.err("expected a value"),
            }
        } else {
            Ok(Slot { node, val: Val::Sym(p) })
        }
    }

    fn term_body(&mut self, pop: String) -> Result<ProbTerm, ExprParseError> {
        self.expect('(')?;
        let mut outcome = vec![self.slot()?];
        while self.eat(',') {
            outcome.push(self.slot()?);
        }
        let mut given = Vec::new();
        let mut dos = Vec::new();
        if self.eat('|') {
            loop {
                let is_do = matches!(self.peek(), Some(Tok::Ident(s)) if s == "do") && self.peek2() == Some(&Tok::Punct('('));
                if is_do {
                    self.at += 2;
                    dos.push(self.slot()?);
                    while self.eat(',') {
                        dos.push(self.slot()?);
                    }
                    self.expect(')')?;
                } else {
                    given.push(self.slot()?);
                }
                if !self.eat(',') {
                    break;
                }
            }
        }
        self.expect(')')?;
        Ok(ProbTerm { pop, outcome, given, dos })
    }
}

pub fn parse_expr(src: &str) -> Result<ProbExpr, ExprParseError> {
    let mut p = Parser { toks: lex(src)?, at: 0, end: src.len() };
    let e = p.expr()?;
    if p.at != p.toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}
