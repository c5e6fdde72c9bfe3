//! Symbolic probability expressions.
//!
//! A term slot names a diagram node and either a symbol standing for the
//! node's value (`x`, or primed `x'` when the same node is summed twice) or a
//! fixed value (`X=1`). Sums bind symbols; everything else is free.

mod normalize;
mod parse;
mod render;

pub use normalize::{equivalent, expand_expectations, normalize};
pub use parse::{parse_expr, ExprParseError};
pub use render::{render, Format};

use std::collections::{BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

use crate::graph::CausalDiagram;

pub const SOURCE: &str = "src";
pub const TARGET: &str = "tgt";

/// A variable symbol: node name plus a prime count.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Sym {
    pub node: String,
    pub primes: u8,
}

impl Sym {
    pub fn new(node: impl Into<String>) -> Self {
        Sym { node: node.into(), primes: 0 }
    }

    pub fn primed(node: impl Into<String>, primes: u8) -> Self {
        Sym { node: node.into(), primes }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Val {
    Sym(u8),
    Fixed(u32),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Slot {
    pub node: String,
    pub val: Val,
}

impl Slot {
    pub fn free(node: impl Into<String>) -> Self {
        Slot { node: node.into(), val: Val::Sym(0) }
    }

    pub fn sym(sym: &Sym) -> Self {
        Slot { node: sym.node.clone(), val: Val::Sym(sym.primes) }
    }

    pub fn fixed(node: impl Into<String>, v: u32) -> Self {
        Slot { node: node.into(), val: Val::Fixed(v) }
    }

    pub fn symbol(&self) -> Option<Sym> {
        match self.val {
            Val::Sym(p) => Some(Sym::primed(self.node.clone(), p)),
            Val::Fixed(_) => None,
        }
    }
}

/// `P_pop(outcome | given, do(dos))`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ProbTerm {
    pub pop: String,
    pub outcome: Vec<Slot>,
    pub given: Vec<Slot>,
    pub dos: Vec<Slot>,
}

impl ProbTerm {
    pub fn new(outcome: Vec<Slot>, given: Vec<Slot>, dos: Vec<Slot>) -> Self {
        ProbTerm { pop: SOURCE.to_string(), outcome, given, dos }
    }

    /// Term over free symbols named by node: `P(outcome | given, do(dos))`.
    pub fn of(outcome: &[&str], given: &[&str], dos: &[&str]) -> Self {
        let f = |v: &[&str]| v.iter().map(|n| Slot::free(*n)).collect();
        ProbTerm::new(f(outcome), f(given), f(dos))
    }

    pub fn with_pop(mut self, pop: &str) -> Self {
        self.pop = pop.to_string();
        self
    }

    pub fn slots(&self) -> impl Iterator<Item = &Slot> {
        self.outcome.iter().chain(&self.given).chain(&self.dos)
    }

    pub fn mentions(&self, node: &str) -> bool {
        self.slots().any(|s| s.node == node)
    }

    pub fn is_do_free(&self) -> bool {
        self.dos.is_empty()
    }

    pub fn free_syms(&self) -> BTreeSet<Sym> {
        self.slots().filter_map(Slot::symbol).collect()
    }

    pub fn outcome_nodes(&self) -> Vec<&str> {
        self.outcome.iter().map(|s| s.node.as_str()).collect()
    }

    pub fn given_nodes(&self) -> Vec<&str> {
        self.given.iter().map(|s| s.node.as_str()).collect()
    }

    pub fn do_nodes(&self) -> Vec<&str> {
        self.dos.iter().map(|s| s.node.as_str()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ProbExpr {
    Const(i64),
    Term(ProbTerm),
    Sum { over: Vec<Sym>, body: Box<ProbExpr> },
    Product(Vec<ProbExpr>),
    Quotient(Box<ProbExpr>, Box<ProbExpr>),
    Difference(Box<ProbExpr>, Box<ProbExpr>),
    /// Σ_v v · of[var := v]; `var` must be free in `of`.
    Expectation { var: Sym, of: Box<ProbExpr> },
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExprError {
    #[error("malformed expression: {0}")]
    Malformed(String),
}

impl ProbExpr {
    pub fn one() -> Self {
        ProbExpr::Const(1)
    }

    pub fn term(t: ProbTerm) -> Self {
        ProbExpr::Term(t)
    }

    pub fn sum(over: Vec<Sym>, body: ProbExpr) -> Self {
        if over.is_empty() {
            body
        } else {
            ProbExpr::Sum { over, body: Box::new(body) }
        }
    }

    pub fn product(factors: Vec<ProbExpr>) -> Self {
        match factors.len() {
            0 => ProbExpr::one(),
            1 => factors.into_iter().next().unwrap(),
            _ => ProbExpr::Product(factors),
        }
    }

    pub fn quotient(num: ProbExpr, den: ProbExpr) -> Self {
        ProbExpr::Quotient(Box::new(num), Box::new(den))
    }

    pub fn difference(a: ProbExpr, b: ProbExpr) -> Self {
        ProbExpr::Difference(Box::new(a), Box::new(b))
    }

    pub fn expectation(var: Sym, of: ProbExpr) -> Self {
        ProbExpr::Expectation { var, of: Box::new(of) }
    }

    pub fn free_syms(&self) -> BTreeSet<Sym> {
        match self {
            ProbExpr::Const(_) => BTreeSet::new(),
            ProbExpr::Term(t) => t.free_syms(),
            ProbExpr::Sum { over, body } => {
                let mut f = body.free_syms();
                for s in over {
                    f.remove(s);
                }
                f
            }
            ProbExpr::Product(fs) => fs.iter().flat_map(|f| f.free_syms()).collect(),
            ProbExpr::Quotient(a, b) | ProbExpr::Difference(a, b) => {
                let mut f = a.free_syms();
                f.extend(b.free_syms());
                f
            }
            ProbExpr::Expectation { var, of } => {
                let mut f = of.free_syms();
                f.remove(var);
                f
            }
        }
    }

    /// Every symbol mentioned anywhere, bound or free.
    pub fn all_syms(&self) -> BTreeSet<Sym> {
        let mut out = BTreeSet::new();
        self.visit_terms(&mut |t| out.extend(t.free_syms()));
        self.visit(&mut |e| match e {
            ProbExpr::Sum { over, .. } => out.extend(over.iter().cloned()),
            ProbExpr::Expectation { var, .. } => {
                out.insert(var.clone());
            }
            _ => {}
        });
        out
    }

    /// Prime count that is unused for `node` anywhere in the expression.
    pub fn fresh_primes(&self, node: &str) -> u8 {
        self.all_syms().iter().filter(|s| s.node == node).map(|s| s.primes + 1).max().unwrap_or(0)
    }

    pub fn visit(&self, f: &mut dyn FnMut(&ProbExpr)) {
        f(self);
        match self {
            ProbExpr::Const(_) | ProbExpr::Term(_) => {}
            ProbExpr::Sum { body, .. } => body.visit(f),
            ProbExpr::Product(fs) => fs.iter().for_each(|x| x.visit(f)),
            ProbExpr::Quotient(a, b) | ProbExpr::Difference(a, b) => {
                a.visit(f);
                b.visit(f);
            }
            ProbExpr::Expectation { of, .. } => of.visit(f),
        }
    }

    pub fn visit_terms(&self, f: &mut dyn FnMut(&ProbTerm)) {
        self.visit(&mut |e| {
            if let ProbExpr::Term(t) = e {
                f(t)
            }
        });
    }

    pub fn terms(&self) -> Vec<&ProbTerm> {
        let mut out: Vec<&ProbTerm> = Vec::new();
        fn go<'a>(e: &'a ProbExpr, out: &mut Vec<&'a ProbTerm>) {
            match e {
                ProbExpr::Const(_) => {}
                ProbExpr::Term(t) => out.push(t),
                ProbExpr::Sum { body, .. } => go(body, out),
                ProbExpr::Product(fs) => fs.iter().for_each(|x| go(x, out)),
                ProbExpr::Quotient(a, b) | ProbExpr::Difference(a, b) => {
                    go(a, out);
                    go(b, out);
                }
                ProbExpr::Expectation { of, .. } => go(of, out),
            }
        }
        go(self, &mut out);
        out
    }

    /// Rebuilds the tree with every term passed through `f` (pre-order).
    pub fn map_terms(&self, f: &mut dyn FnMut(&ProbTerm) -> ProbExpr) -> ProbExpr {
        match self {
            ProbExpr::Const(c) => ProbExpr::Const(*c),
            ProbExpr::Term(t) => f(t),
            ProbExpr::Sum { over, body } => ProbExpr::Sum { over: over.clone(), body: Box::new(body.map_terms(f)) },
            ProbExpr::Product(fs) => ProbExpr::Product(fs.iter().map(|x| x.map_terms(f)).collect()),
            ProbExpr::Quotient(a, b) => ProbExpr::quotient(a.map_terms(f), b.map_terms(f)),
            ProbExpr::Difference(a, b) => ProbExpr::difference(a.map_terms(f), b.map_terms(f)),
            ProbExpr::Expectation { var, of } => ProbExpr::expectation(var.clone(), of.map_terms(f)),
        }
    }

    pub fn is_do_free(&self) -> bool {
        self.terms().iter().all(|t| t.is_do_free())
    }

    pub fn populations(&self) -> BTreeSet<String> {
        self.terms().iter().map(|t| t.pop.clone()).collect()
    }

    /// Replaces free occurrences of `sym` by the fixed value `v`.
    pub fn bind(&self, sym: &Sym, v: u32) -> ProbExpr {
        match self {
            ProbExpr::Const(c) => ProbExpr::Const(*c),
            ProbExpr::Term(t) => {
                let fix = |slots: &Vec<Slot>| -> Vec<Slot> {
                    slots
                        .iter()
                        .map(|s| if s.symbol().as_ref() == Some(sym) { Slot::fixed(s.node.clone(), v) } else { s.clone() })
                        .collect()
                };
                ProbExpr::Term(ProbTerm { pop: t.pop.clone(), outcome: fix(&t.outcome), given: fix(&t.given), dos: fix(&t.dos) })
            }
            ProbExpr::Sum { over, body } => {
                if over.contains(sym) {
                    self.clone()
                } else {
                    ProbExpr::Sum { over: over.clone(), body: Box::new(body.bind(sym, v)) }
                }
            }
            ProbExpr::Product(fs) => ProbExpr::Product(fs.iter().map(|x| x.bind(sym, v)).collect()),
            ProbExpr::Quotient(a, b) => ProbExpr::quotient(a.bind(sym, v), b.bind(sym, v)),
            ProbExpr::Difference(a, b) => ProbExpr::difference(a.bind(sym, v), b.bind(sym, v)),
            ProbExpr::Expectation { var, of } => {
                if var == sym {
                    self.clone()
                } else {
                    ProbExpr::expectation(var.clone(), of.bind(sym, v))
                }
            }
        }
    }

    /// Renames free occurrences of `from` to `to`.
    pub fn rename(&self, from: &Sym, to: &Sym) -> ProbExpr {
        debug_assert_eq!(from.node, to.node);
        match self {
            ProbExpr::Term(t) => {
                let ren = |slots: &Vec<Slot>| -> Vec<Slot> {
                    slots.iter().map(|s| if s.symbol().as_ref() == Some(from) { Slot::sym(to) } else { s.clone() }).collect()
                };
                ProbExpr::Term(ProbTerm { pop: t.pop.clone(), outcome: ren(&t.outcome), given: ren(&t.given), dos: ren(&t.dos) })
            }
            ProbExpr::Sum { over, .. } if over.contains(from) => self.clone(),
            ProbExpr::Sum { over, body } => ProbExpr::Sum { over: over.clone(), body: Box::new(body.rename(from, to)) },
            ProbExpr::Product(fs) => ProbExpr::Product(fs.iter().map(|x| x.rename(from, to)).collect()),
            ProbExpr::Quotient(a, b) => ProbExpr::quotient(a.rename(from, to), b.rename(from, to)),
            ProbExpr::Difference(a, b) => ProbExpr::difference(a.rename(from, to), b.rename(from, to)),
            ProbExpr::Expectation { var, .. } if var == from => self.clone(),
            ProbExpr::Expectation { var, of } => ProbExpr::expectation(var.clone(), of.rename(from, to)),
            ProbExpr::Const(_) => self.clone(),
        }
    }

    /// Renames every bound symbol that shadows one already in scope to a
    /// fresh prime of the same node.
    pub fn unshadow(&self) -> ProbExpr {
        fn go(e: &ProbExpr, scope: &mut Vec<Sym>, next: &mut HashMap<String, u8>) -> ProbExpr {
            let fresh = |s: &Sym, next: &mut HashMap<String, u8>| {
                let p = next.get_mut(&s.node).expect("node seen");
                let out = Sym::primed(s.node.clone(), *p);
                *p += 1;
                out
            };
            match e {
                ProbExpr::Sum { over, body } => {
                    let mut body = (**body).clone();
                    let mut vars = Vec::new();
                    for s in over {
                        if scope.contains(s) {
                            let t = fresh(s, next);
                            body = body.rename(s, &t);
                            vars.push(t);
                        } else {
                            vars.push(s.clone());
                        }
                    }
                    let n = scope.len();
                    scope.extend(vars.iter().cloned());
                    let body = go(&body, scope, next);
                    scope.truncate(n);
                    ProbExpr::Sum { over: vars, body: Box::new(body) }
                }
                ProbExpr::Expectation { var, of } => {
                    let (var, of) = if scope.contains(var) {
                        let t = fresh(var, next);
                        (t.clone(), of.rename(var, &t))
                    } else {
                        (var.clone(), (**of).clone())
                    };
                    scope.push(var.clone());
                    let of = go(&of, scope, next);
                    scope.pop();
                    ProbExpr::expectation(var, of)
                }
                ProbExpr::Product(fs) => ProbExpr::Product(fs.iter().map(|f| go(f, scope, next)).collect()),
                ProbExpr::Quotient(a, b) => ProbExpr::quotient(go(a, scope, next), go(b, scope, next)),
                ProbExpr::Difference(a, b) => ProbExpr::difference(go(a, scope, next), go(b, scope, next)),
                ProbExpr::Const(_) | ProbExpr::Term(_) => e.clone(),
            }
        }
        let mut next: HashMap<String, u8> = HashMap::new();
        for s in self.all_syms() {
            let p = next.entry(s.node.clone()).or_insert(0);
            *p = (*p).max(s.primes + 1);
        }
        go(self, &mut self.free_syms().into_iter().collect(), &mut next)
    }

    /// Checks the structural invariants of the expression type.
    pub fn validate(&self) -> Result<(), ExprError> {
        fn go(e: &ProbExpr, bound: &mut Vec<Sym>) -> Result<(), ExprError> {
            match e {
                ProbExpr::Const(_) => Ok(()),
                ProbExpr::Term(t) => {
                    if t.outcome.is_empty() {
                        return Err(ExprError::Malformed("term with empty outcome".into()));
                    }
                    if t.pop.is_empty() {
                        return Err(ExprError::Malformed("empty population tag".into()));
                    }
                    let mut nodes = BTreeSet::new();
                    for s in t.slots() {
                        if !nodes.insert(s.node.as_str()) {
                            return Err(ExprError::Malformed(format!("`{}` appears twice in one term", s.node)));
                        }
                        if let Val::Fixed(_) = s.val {
                            if bound.iter().any(|b| b.node == s.node) {
                                return Err(ExprError::Malformed(format!("`{}` is summed and value-bound", s.node)));
                            }
                        }
                    }
                    Ok(())
                }
                ProbExpr::Sum { over, body } => {
                    if over.is_empty() {
                        return Err(ExprError::Malformed("empty summation".into()));
                    }
                    let free = body.free_syms();
                    if let Some(s) = over.iter().find(|s| !free.contains(s)) {
                        return Err(ExprError::Malformed(format!("summation variable `{}` absent from body", s.node)));
                    }
                    let n = bound.len();
                    bound.extend(over.iter().cloned());
                    let r = go(body, bound);
                    bound.truncate(n);
                    r
                }
                ProbExpr::Product(fs) => fs.iter().try_for_each(|f| go(f, bound)),
                ProbExpr::Quotient(a, b) | ProbExpr::Difference(a, b) => {
                    go(a, bound)?;
                    go(b, bound)
                }
                ProbExpr::Expectation { var, of } => {
                    if !of.free_syms().contains(var) {
                        return Err(ExprError::Malformed(format!("expectation variable `{}` not free", var.node)));
                    }
                    go(of, bound)
                }
            }
        }
        go(self, &mut Vec::new())
    }
}

impl fmt::Display for ProbExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&render(self, Format::Text))
    }
}

/// Canonical variable order: diagram declaration order, unknown names after
/// in lexical order.
#[derive(Debug, Clone, Default)]
pub struct VarOrder {
    rank: HashMap<String, usize>,
}

impl VarOrder {
    pub fn lexical() -> Self {
        Self::default()
    }

    pub fn from_diagram(d: &CausalDiagram) -> Self {
        VarOrder { rank: d.ids().map(|v| (d.name(v).to_string(), v.0)).collect() }
    }

    pub fn key<'a>(&self, node: &'a str) -> (usize, &'a str) {
        (self.rank.get(node).copied().unwrap_or(usize::MAX), node)
    }

    pub fn sort_slots(&self, slots: &mut [Slot]) {
        slots.sort_by(|a, b| self.key(&a.node).cmp(&self.key(&b.node)).then(a.val.cmp(&b.val)));
    }

    pub fn sort_syms(&self, syms: &mut [Sym]) {
        syms.sort_by(|a, b| self.key(&a.node).cmp(&self.key(&b.node)).then(a.primes.cmp(&b.primes)));
    }
}

/// A do-free-flagged estimand with the populations it draws on.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Estimand {
    pub expr: ProbExpr,
    pub do_free: bool,
    pub populations_used: BTreeSet<String>,
}

impl Estimand {
    pub fn new(expr: ProbExpr) -> Self {
        Estimand { do_free: expr.is_do_free(), populations_used: expr.populations(), expr }
    }
}

/// Groups a product body into its factor list.
pub(crate) fn factors(e: &ProbExpr) -> Vec<ProbExpr> {
    match e {
        ProbExpr::Product(fs) => fs.clone(),
        ProbExpr::Const(1) => Vec::new(),
        other => vec![other.clone()],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unshadow_primes_rebound_symbols() {
        let e = parse_expr("sum{Z} P(Y | X, Z) sum{X} P(Z | X) P(X)").unwrap();
        let u = e.unshadow();
        assert_eq!(u.to_string(), "Σ_z P(y | x, z) Σ_x' P(z | x') P(x')");
        assert_eq!(u.unshadow(), u);
        assert_eq!(u.free_syms(), e.free_syms());
    }

    #[test]
    fn free_variables_examples() {
        let e = parse_expr("P(Y | do(X))").unwrap();
        let names: Vec<String> = e.free_syms().into_iter().map(|s| s.node).collect();
        assert_eq!(names, ["X", "Y"]);
        let eq7 = parse_expr("sum{Z} P(Y | Z, do(X)) P[tgt](Z)").unwrap();
        let names: Vec<String> = eq7.free_syms().into_iter().map(|s| s.node).collect();
        assert_eq!(names, ["X", "Y"]);
    }

    #[test]
    fn eq6_has_no_free_variables() {
        let eq6 = parse_expr(
            "sum{M, W2, W3} prod(P(W2, W3), (E(Y | X=1, M, W3) - E(Y | X=0, M, W3)), P(M | X=0, W2))",
        )
        .unwrap();
        assert!(eq6.free_syms().is_empty());
        eq6.validate().unwrap();
    }

    #[test]
    fn bind_respects_shadowing() {
        let e = parse_expr("prod(P(Z | X), sum{X} P(Y | X, Z))").unwrap();
        let b = e.bind(&Sym::new("X"), 1);
        assert_eq!(render(&b, Format::Structured), "prod(P[src](Z | X=1), (sum{X} P[src](Y | X, Z)))");
    }

    #[test]
    fn validate_rejects() {
        assert!(parse_expr("sum{Z} P(Y)").unwrap().validate().is_err());
        assert!(parse_expr("P(Y | Y)").unwrap().validate().is_err());
        assert!(parse_expr("sum{M} P(M=1 | X)").unwrap_or(ProbExpr::one()).validate().is_err());
    }

    #[test]
    fn fresh_primes_skip_used() {
        let e = parse_expr("sum{X'} P(Y | X', Z) P(X')").unwrap();
        assert_eq!(e.fresh_primes("X"), 2);
        assert_eq!(e.fresh_primes("Q"), 0);
    }
}
