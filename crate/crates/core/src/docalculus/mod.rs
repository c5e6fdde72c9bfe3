//! The three rules as checked rewrites of single terms, the probability
//! moves that accompany them, and a bounded derivation search.
//!
//! For a binding (X, Y, Z, W) the rules read
//!
//! ```text
//! R1  P(y | do(x), z, w)     = P(y | do(x), w)        if (Y ⊥ Z | X, W) in G[in:X]
//! R2  P(y | do(x), do(z), w) = P(y | do(x), z, w)     if (Y ⊥ Z | X, W) in G[in:X out:Z]
//! R3  P(y | do(x), do(z), w) = P(y | do(x), w)        if (Y ⊥ Z | X, W) in G[in:X,Z(W)]
//! ```
//!
//! Forward direction rewrites left to right.

mod search;

pub use search::{derive, derive_preferring, Budget, Derivation, DeriveError, Goal, TraceRecord};

use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{normalize, ProbExpr, ProbTerm, Slot, Sym, VarOrder};
use crate::graph::{certify, CausalDiagram, GraphError, Mutilation, SeparationCertificate, VarSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum RuleId {
    R1,
    R2,
    R3,
}

impl fmt::Display for RuleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Way {
    Forward,
    Backward,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct RuleBinding {
    pub x: VarSet,
    pub y: VarSet,
    pub z: VarSet,
    pub w: VarSet,
    pub way: Way,
    /// Slots added for Z when a backward step inserts it (R1, R3); empty
    /// means each Z node's unprimed symbol.
    pub inserted: Vec<Slot>,
}

impl RuleBinding {
    pub fn new(x: VarSet, y: VarSet, z: VarSet, w: VarSet, way: Way) -> Self {
        RuleBinding { x, y, z, w, way, inserted: Vec::new() }
    }

    pub fn from_names(d: &CausalDiagram, x: &[&str], y: &[&str], z: &[&str], w: &[&str], way: Way) -> Result<Self, GraphError> {
        Ok(RuleBinding::new(d.set(x)?, d.set(y)?, d.set(z)?, d.set(w)?, way))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuleError {
    #[error("certificate does not license this rule and binding: {0}")]
    CertificateMismatch(String),
    #[error("no term matches the rule pattern")]
    PatternNotFound,
    #[error("certificate was computed on a different diagram")]
    StaleCertificate,
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// The separation query that licenses `rule` under `b`.
pub fn rule_applicable(d: &CausalDiagram, rule: RuleId, b: &RuleBinding) -> Result<SeparationCertificate, GraphError> {
    d.check_disjoint(&[&b.x, &b.y, &b.z, &b.w])?;
    let empty = VarSet::new();
    let mutilation = match rule {
        RuleId::R1 => Mutilation::new(d, &b.x, &empty),
        RuleId::R2 => Mutilation::new(d, &b.x, &b.z),
        RuleId::R3 => {
            let zw = d.rule3_zw(&b.x, &b.z, &b.w)?;
            Mutilation::new(d, &b.x.union(&zw).copied().collect(), &empty)
        }
    };
    let given: VarSet = b.x.union(&b.w).copied().collect();
    certify(d, &mutilation, &b.y, &b.z, &given)
}

fn node_set(d: &CausalDiagram, slots: &[Slot]) -> Option<VarSet> {
    slots.iter().map(|s| d.try_id(&s.node)).collect()
}

fn take(slots: &[Slot], d: &CausalDiagram, set: &VarSet) -> (Vec<Slot>, Vec<Slot>) {
    slots.iter().cloned().partition(|s| d.try_id(&s.node).map_or(false, |v| set.contains(&v)))
}

/// Rewrites one term by the rule, or `None` if it does not match.
pub(crate) fn rewrite_term(d: &CausalDiagram, t: &ProbTerm, rule: RuleId, b: &RuleBinding) -> Option<ProbTerm> {
    let outcome = node_set(d, &t.outcome)?;
    let given = node_set(d, &t.given)?;
    let dos = node_set(d, &t.dos)?;
    if outcome != b.y {
        return None;
    }
    let xz: VarSet = b.x.union(&b.z).copied().collect();
    let zw: VarSet = b.z.union(&b.w).copied().collect();
    let inserted = || -> Vec<Slot> {
        if b.inserted.is_empty() {
            b.z.iter().map(|&v| Slot::free(d.name(v))).collect()
        } else {
            b.inserted.clone()
        }
    };
    let mut out = t.clone();
    match (rule, b.way) {
        (RuleId::R1, Way::Forward) => {
            if dos != b.x || given != zw {
                return None;
            }
            out.given = take(&t.given, d, &b.w).0;
        }
        (RuleId::R1, Way::Backward) => {
            if dos != b.x || given != b.w {
                return None;
            }
            out.given.extend(inserted());
        }
        (RuleId::R2, Way::Forward) => {
            if dos != xz || given != b.w {
                return None;
            }
            let (moved, kept) = take(&t.dos, d, &b.z);
            out.dos = kept;
            out.given.extend(moved);
        }
        (RuleId::R2, Way::Backward) => {
            if dos != b.x || given != zw {
                return None;
            }
            let (moved, kept) = take(&t.given, d, &b.z);
            out.given = kept;
            out.dos.extend(moved);
        }
        (RuleId::R3, Way::Forward) => {
            if dos != xz || given != b.w {
                return None;
            }
            out.dos = take(&t.dos, d, &b.x).0;
        }
        (RuleId::R3, Way::Backward) => {
            if dos != b.x || given != b.w {
                return None;
            }
            out.dos.extend(inserted());
        }
    }
    Some(out)
}

/// Replaces the `site`-th term (pre-order) of `e`.
pub(crate) fn replace_term(e: &ProbExpr, site: usize, new: &ProbExpr) -> ProbExpr {
    let mut k = 0usize;
    e.map_terms(&mut |t| {
        let here = k;
        k += 1;
        if here == site {
            new.clone()
        } else {
            ProbExpr::Term(t.clone())
        }
    })
}

/// Each term with the symbols visible at its position: the root's free
/// symbols plus those bound by enclosing sums and expectations.
pub(crate) fn term_scopes(e: &ProbExpr) -> Vec<(ProbTerm, BTreeSet<Sym>)> {
    fn go(e: &ProbExpr, scope: &mut Vec<Sym>, out: &mut Vec<(ProbTerm, BTreeSet<Sym>)>) {
        match e {
            ProbExpr::Const(_) => {}
            ProbExpr::Term(t) => out.push((t.clone(), scope.iter().cloned().collect())),
            ProbExpr::Sum { over, body } => {
                let n = scope.len();
                scope.extend(over.iter().cloned());
                go(body, scope, out);
                scope.truncate(n);
            }
            ProbExpr::Product(fs) => fs.iter().for_each(|f| go(f, scope, out)),
            ProbExpr::Quotient(a, b) | ProbExpr::Difference(a, b) => {
                go(a, scope, out);
                go(b, scope, out);
            }
            ProbExpr::Expectation { var, of } => {
                scope.push(var.clone());
                go(of, scope, out);
                scope.pop();
            }
        }
    }
    let mut scope: Vec<Sym> = e.free_syms().into_iter().collect();
    let mut out = Vec::new();
    go(e, &mut scope, &mut out);
    out
}

fn check_certificate(d: &CausalDiagram, rule: RuleId, b: &RuleBinding, cert: &SeparationCertificate) -> Result<(), RuleError> {
    if cert.diagram != d.fingerprint() {
        return Err(RuleError::StaleCertificate);
    }
    let expected = rule_applicable(d, rule, b)?;
    if expected.a != cert.a || expected.b != cert.b || expected.given != cert.given || expected.mutilation != cert.mutilation {
        return Err(RuleError::CertificateMismatch(format!("expected a query on {}", expected.graph_tag)));
    }
    if !cert.separated() || *cert != expected {
        return Err(RuleError::CertificateMismatch("verdict is not separated".into()));
    }
    Ok(())
}

/// Applies the rule at term `site`; the result is normalized.
pub fn apply_rule_at(
    d: &CausalDiagram,
    e: &ProbExpr,
    site: usize,
    rule: RuleId,
    b: &RuleBinding,
    cert: &SeparationCertificate,
) -> Result<ProbExpr, RuleError> {
    check_certificate(d, rule, b, cert)?;
    let t = e.terms().get(site).map(|t| (*t).clone()).ok_or(RuleError::PatternNotFound)?;
    let new = rewrite_term(d, &t, rule, b).ok_or(RuleError::PatternNotFound)?;
    Ok(normalize(&replace_term(e, site, &ProbExpr::Term(new)), &VarOrder::from_diagram(d)))
}

/// Applies the rule at the first matching term.
pub fn apply_rule(
    d: &CausalDiagram,
    e: &ProbExpr,
    rule: RuleId,
    b: &RuleBinding,
    cert: &SeparationCertificate,
) -> Result<ProbExpr, RuleError> {
    check_certificate(d, rule, b, cert)?;
    let site = e.terms().iter().position(|t| rewrite_term(d, t, rule, b).is_some()).ok_or(RuleError::PatternNotFound)?;
    apply_rule_at(d, e, site, rule, b, cert)
}

/// `P(a | c) = Σ_b P(a | b, c) P(b | c)` at term `site`, with `b` a fresh
/// symbol of `node`.
pub fn condition_split(e: &ProbExpr, site: usize, node: &str, order: &VarOrder) -> Option<ProbExpr> {
    let t = (*e.terms().get(site)?).clone();
    if t.mentions(node) {
        return None;
    }
    let sym = Sym::primed(node, e.fresh_primes(node));
    let mut a = t.clone();
    a.given.push(Slot::sym(&sym));
    let bterm = ProbTerm { pop: t.pop.clone(), outcome: vec![Slot::sym(&sym)], given: t.given.clone(), dos: t.dos.clone() };
    let split = ProbExpr::sum(vec![sym], ProbExpr::product(vec![ProbExpr::Term(a), ProbExpr::Term(bterm)]));
    Some(normalize(&replace_term(e, site, &split), order))
}

/// Inside the `site`-th sum (pre-order), joins `P(a | b, c) P(b | c)` into
/// `P(a, b | c)` for the summed symbol `b`, so that normalization removes
/// the sum over `b`.
pub fn marginalize(e: &ProbExpr, site: usize, b: &Sym, order: &VarOrder) -> Option<ProbExpr> {
    fn join(fs: &[ProbExpr], b: &Sym) -> Option<Vec<ProbExpr>> {
        let slot = Slot::sym(b);
        for (i, fi) in fs.iter().enumerate() {
            let ProbExpr::Term(ti) = fi else { continue };
            if ti.outcome != [slot.clone()] {
                continue;
            }
            for (j, fj) in fs.iter().enumerate() {
                let ProbExpr::Term(tj) = fj else { continue };
                if i == j || tj.pop != ti.pop || !tj.given.contains(&slot) {
                    continue;
                }
                let rest: Vec<Slot> = tj.given.iter().filter(|s| **s != slot).cloned().collect();
                let same_context = {
                    let mut a = rest.clone();
                    let mut c = ti.given.clone();
                    a.sort();
                    c.sort();
                    let mut da = tj.dos.clone();
                    let mut dc = ti.dos.clone();
                    da.sort();
                    dc.sort();
                    a == c && da == dc
                };
                if !same_context {
                    continue;
                }
                let mut outcome = tj.outcome.clone();
                outcome.push(slot.clone());
                let joined = ProbTerm { pop: tj.pop.clone(), outcome, given: rest, dos: tj.dos.clone() };
                let mut out: Vec<ProbExpr> = fs.iter().enumerate().filter(|(k, _)| *k != i && *k != j).map(|(_, f)| f.clone()).collect();
                out.push(ProbExpr::Term(joined));
                return Some(out);
            }
        }
        None
    }
    fn go(e: &ProbExpr, site: usize, k: &mut usize, b: &Sym, done: &mut bool) -> ProbExpr {
        match e {
            ProbExpr::Sum { over, body } => {
                let here = *k;
                *k += 1;
                if here == site && over.contains(b) {
                    let fs = crate::expr::factors(body);
                    if let Some(new) = join(&fs, b) {
                        *done = true;
                        return ProbExpr::Sum { over: over.clone(), body: Box::new(ProbExpr::product(new)) };
                    }
                }
                ProbExpr::Sum { over: over.clone(), body: Box::new(go(body, site, k, b, done)) }
            }
            ProbExpr::Product(fs) => ProbExpr::Product(fs.iter().map(|f| go(f, site, k, b, done)).collect()),
            ProbExpr::Quotient(x, y) => {
                let x = go(x, site, k, b, done);
                ProbExpr::quotient(x, go(y, site, k, b, done))
            }
            ProbExpr::Difference(x, y) => {
                let x = go(x, site, k, b, done);
                ProbExpr::difference(x, go(y, site, k, b, done))
            }
            ProbExpr::Expectation { var, of } => ProbExpr::expectation(var.clone(), go(of, site, k, b, done)),
            other => other.clone(),
        }
    }
    let mut done = false;
    let out = go(e, site, &mut 0, b, &mut done);
    done.then(|| normalize(&out, order))
}

/// `P(a | b, c) = P(b | a, c) P(a | c) / P(b | c)` for the observed
/// conditioning node `pivot` of the `site`-th term.
pub fn bayes(e: &ProbExpr, site: usize, pivot: &str, order: &VarOrder) -> Option<ProbExpr> {
    let t = (*e.terms().get(site)?).clone();
    let i = t.given.iter().position(|s| s.node == pivot)?;
    let b = t.given[i].clone();
    let c: Vec<Slot> = t.given.iter().filter(|s| s.node != pivot).cloned().collect();
    let mk = |outcome: Vec<Slot>, given: Vec<Slot>| ProbExpr::Term(ProbTerm { pop: t.pop.clone(), outcome, given, dos: t.dos.clone() });
    let mut ac = t.outcome.clone();
    ac.extend(c.iter().cloned());
    let new = ProbExpr::quotient(
        ProbExpr::product(vec![mk(vec![b.clone()], ac), mk(t.outcome.clone(), c.clone())]),
        mk(vec![b], c),
    );
    Some(normalize(&replace_term(e, site, &new), order))
}

/// One term with every single-variable deletion the rules license applied:
/// do-variables removed by R3, then exchanged by R2, then conditions
/// dropped by R1, until nothing changes.
pub fn reduce_term(d: &CausalDiagram, t: &ProbTerm) -> ProbTerm {
    let mut t = t.clone();
    'again: loop {
        let (Some(y), Some(given), Some(dos)) = (node_set(d, &t.outcome), node_set(d, &t.given), node_set(d, &t.dos)) else {
            return t;
        };
        for rule in [RuleId::R3, RuleId::R2] {
            for &z in &dos {
                let x = dos.iter().copied().filter(|&v| v != z).collect();
                let b = RuleBinding::new(x, y.clone(), [z].into(), given.clone(), Way::Forward);
                if rule_applicable(d, rule, &b).map_or(false, |c| c.separated()) {
                    if let Some(new) = rewrite_term(d, &t, rule, &b) {
                        t = new;
                        continue 'again;
                    }
                }
            }
        }
        for &z in &given {
            let w = given.iter().copied().filter(|&v| v != z).collect();
            let b = RuleBinding::new(dos.clone(), y.clone(), [z].into(), w, Way::Forward);
            if rule_applicable(d, RuleId::R1, &b).map_or(false, |c| c.separated()) {
                if let Some(new) = rewrite_term(d, &t, RuleId::R1, &b) {
                    t = new;
                    continue 'again;
                }
            }
        }
        return t;
    }
}

/// `reduce_term` on every term, then normalized.
pub fn reduce_terms(d: &CausalDiagram, e: &ProbExpr) -> ProbExpr {
    normalize(&e.map_terms(&mut |t| ProbExpr::Term(reduce_term(d, t))), &VarOrder::from_diagram(d))
}

/// Equality of normal forms after `reduce_terms`.
pub fn equivalent_in(d: &CausalDiagram, a: &ProbExpr, b: &ProbExpr) -> bool {
    reduce_terms(d, a) == reduce_terms(d, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_graph;
    use crate::expr::{parse_expr, render, Format};

    fn g(s: &str) -> CausalDiagram {
        parse_graph(s).unwrap().into_diagram()
    }

    fn text(e: &ProbExpr) -> String {
        render(e, Format::Text)
    }

    #[test]
    fn fig1a_exchange() {
        let d = g("nodes: X, M, Y\nX -> M\nM -> Y\nX -> Y");
        let b = RuleBinding::from_names(&d, &[], &["Y"], &["X"], &[], Way::Forward).unwrap();
        let cert = rule_applicable(&d, RuleId::R2, &b).unwrap();
        assert!(cert.separated());
        let out = apply_rule(&d, &parse_expr("P(Y | do(X))").unwrap(), RuleId::R2, &b, &cert).unwrap();
        assert_eq!(text(&out), "P(y | x)");
    }

    #[test]
    fn bow_exchange_forbidden() {
        let d = g("nodes: X, Y\nX -> Y\nX <-> Y");
        let b = RuleBinding::from_names(&d, &[], &["Y"], &["X"], &[], Way::Forward).unwrap();
        let cert = rule_applicable(&d, RuleId::R2, &b).unwrap();
        assert!(!cert.separated());
        assert_eq!(cert.witness_text().unwrap(), "Y <- L1 -> X");
        let err = apply_rule(&d, &parse_expr("P(Y | do(X))").unwrap(), RuleId::R2, &b, &cert).unwrap_err();
        assert!(matches!(err, RuleError::CertificateMismatch(_)));
    }

    #[test]
    fn selection_removed_in_fig7b() {
        let d = g("nodes: Z, X, Y\nlatent: U\nU -> Z\nU -> Y\nX -> Y\nS ~> Z");
        let b = RuleBinding::from_names(&d, &["X"], &["Y"], &["S"], &[], Way::Forward).unwrap();
        let cert = rule_applicable(&d, RuleId::R1, &b).unwrap();
        assert!(cert.separated());
        let out = apply_rule(&d, &parse_expr("P(Y | S, do(X))").unwrap(), RuleId::R1, &b, &cert).unwrap();
        assert_eq!(text(&out), "P(y | do(x))");
    }

    #[test]
    fn r3_deletes_irrelevant_action() {
        let d = g("nodes: X, Y");
        let b = RuleBinding::from_names(&d, &[], &["Y"], &["X"], &[], Way::Forward).unwrap();
        let cert = rule_applicable(&d, RuleId::R3, &b).unwrap();
        let out = apply_rule(&d, &parse_expr("P(Y | do(X))").unwrap(), RuleId::R3, &b, &cert).unwrap();
        assert_eq!(text(&out), "P(y)");
    }

    #[test]
    fn r1_backward_inserts_observation() {
        let d = g("nodes: X, Z, Y\nX -> Y\nZ -> Y");
        let b = RuleBinding::from_names(&d, &["X"], &["Y"], &["Z"], &[], Way::Backward).unwrap();
        let cert = rule_applicable(&d, RuleId::R1, &b).unwrap();
        // Y depends on Z, so the insertion is not licensed
        assert!(!cert.separated());
        let d2 = g("nodes: X, Z, Y\nX -> Y");
        let b2 = RuleBinding::from_names(&d2, &["X"], &["Y"], &["Z"], &[], Way::Backward).unwrap();
        let cert2 = rule_applicable(&d2, RuleId::R1, &b2).unwrap();
        let out = apply_rule(&d2, &parse_expr("P(Y | do(X))").unwrap(), RuleId::R1, &b2, &cert2).unwrap();
        assert_eq!(text(&out), "P(y | do(x), z)");
    }

    #[test]
    fn stale_and_missing_patterns() {
        let d = g("nodes: X, M, Y\nX -> M\nM -> Y\nX -> Y");
        let b = RuleBinding::from_names(&d, &[], &["Y"], &["X"], &[], Way::Forward).unwrap();
        let cert = rule_applicable(&d, RuleId::R2, &b).unwrap();
        let other = g("nodes: X, M, Y\nX -> M\nM -> Y");
        assert_eq!(apply_rule(&other, &parse_expr("P(Y | do(X))").unwrap(), RuleId::R2, &b, &cert), Err(RuleError::StaleCertificate));
        assert_eq!(apply_rule(&d, &parse_expr("P(M | do(X))").unwrap(), RuleId::R2, &b, &cert), Err(RuleError::PatternNotFound));
        let r1 = rule_applicable(&d, RuleId::R1, &b).unwrap();
        assert!(matches!(apply_rule(&d, &parse_expr("P(Y | do(X))").unwrap(), RuleId::R2, &b, &r1), Err(RuleError::CertificateMismatch(_))));
    }

    #[test]
    fn r1_with_empty_z_is_identity() {
        let d = g("nodes: X, Y\nX -> Y\nX <-> Y");
        let b = RuleBinding::from_names(&d, &["X"], &["Y"], &[], &[], Way::Forward).unwrap();
        let cert = rule_applicable(&d, RuleId::R1, &b).unwrap();
        assert!(cert.separated());
        let e = parse_expr("P(Y | do(X))").unwrap();
        assert_eq!(apply_rule(&d, &e, RuleId::R1, &b, &cert).unwrap(), e);
    }

    #[test]
    fn axiom_moves() {
        let order = VarOrder::lexical();
        let e = parse_expr("P(Y | do(X))").unwrap();
        let s = condition_split(&e, 0, "W", &order).unwrap();
        assert_eq!(text(&s), "Σ_w P(w | do(x)) P(y | do(x), w)");
        let back = marginalize(&s, 0, &Sym::new("W"), &order).unwrap();
        assert_eq!(back, e);
        let b = bayes(&parse_expr("P(Y | Z)").unwrap(), 0, "Z", &order).unwrap();
        assert_eq!(text(&b), "[P(y) P(z | y)] / P(z)");
        // splitting on a symbol already in use primes the new one
        let p = condition_split(&parse_expr("sum{X} P(Y | X) P(X)").unwrap(), 0, "X", &order);
        assert!(p.is_none());
        let q = condition_split(&parse_expr("P(Y | X) P(X)").unwrap(), 1, "Y", &order).unwrap();
        assert!(text(&q).contains("y'"));
    }
}
