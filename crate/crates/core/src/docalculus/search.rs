use std::collections::{HashMap, HashSet};

use serde::Serialize;
use thiserror::Error;

use super::{
    bayes, condition_split, marginalize, replace_term, rewrite_term, rule_applicable, term_scopes, RuleBinding, RuleError, RuleId, Way,
};
use crate::expr::{equivalent, normalize, render, Format, ProbExpr, Slot, Sym, VarOrder};
use crate::graph::{CausalDiagram, NodeKind, SeparationCertificate, VarSet};

#[derive(Debug, Clone)]
pub enum Goal {
    /// No do-operator remains.
    DoFree,
    /// Selection nodes occur only as conditions of do-free terms.
    SSound,
    Target(ProbExpr),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Budget {
    pub depth: usize,
    pub width: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Budget { depth: 8, width: 512 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DeriveError {
    #[error("no derivation within depth {depth} (explored {explored} expressions, last frontier {frontier})")]
    BudgetExhausted { depth: usize, explored: usize, frontier: usize },
    #[error("malformed goal: {0}")]
    MalformedGoal(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepKind {
    Rule { rule: RuleId, binding: RuleBinding, certificate: SeparationCertificate },
    ConditionSplit { node: String },
    Marginalize { sym: Sym },
    Bayes { pivot: String },
}

impl StepKind {
    pub fn name(&self) -> String {
        match self {
            StepKind::Rule { rule, .. } => rule.to_string(),
            StepKind::ConditionSplit { .. } => "condition-split".into(),
            StepKind::Marginalize { .. } => "marginalize".into(),
            StepKind::Bayes { .. } => "bayes".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DerivationStep {
    pub kind: StepKind,
    /// Term index (pre-order) for rules, splits and Bayes; sum index for
    /// marginalization.
    pub site: usize,
    pub before: ProbExpr,
    pub after: ProbExpr,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Derivation {
    pub diagram: CausalDiagram,
    pub start: ProbExpr,
    pub end: ProbExpr,
    pub steps: Vec<DerivationStep>,
}

/// One printable line of a derivation trace.
#[derive(Debug, Clone, Serialize)]
pub struct TraceRecord {
    pub step: usize,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub binding: Option<BindingRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub query: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub parameter: Option<String>,
    pub before: String,
    pub after: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct BindingRecord {
    pub x: Vec<String>,
    pub y: Vec<String>,
    pub z: Vec<String>,
    pub w: Vec<String>,
    pub direction: Way,
}

impl Derivation {
    /// Re-checks every certificate and re-applies every step.
    pub fn replay(&self) -> Result<ProbExpr, RuleError> {
        let d = &self.diagram;
        let order = VarOrder::from_diagram(d);
        let mut cur = normalize(&self.start, &order);
        for step in &self.steps {
            if cur != step.before {
                return Err(RuleError::PatternNotFound);
            }
            let next = match &step.kind {
                StepKind::Rule { rule, binding, certificate } => {
                    if !certificate.recheck(d)? {
                        return Err(RuleError::StaleCertificate);
                    }
                    super::apply_rule_at(d, &cur, step.site, *rule, binding, certificate)?
                }
                StepKind::ConditionSplit { node } => condition_split(&cur, step.site, node, &order).ok_or(RuleError::PatternNotFound)?,
                StepKind::Marginalize { sym } => marginalize(&cur, step.site, sym, &order).ok_or(RuleError::PatternNotFound)?,
                StepKind::Bayes { pivot } => bayes(&cur, step.site, pivot, &order).ok_or(RuleError::PatternNotFound)?,
            };
            if next != step.after {
                return Err(RuleError::PatternNotFound);
            }
            cur = next;
        }
        Ok(cur)
    }

    pub fn trace(&self, fmt: Format) -> Vec<TraceRecord> {
        let d = &self.diagram;
        self.steps
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let (binding, query, parameter) = match &s.kind {
                    StepKind::Rule { binding: b, certificate: c, .. } => (
                        Some(BindingRecord {
                            x: d.names_of(&b.x),
                            y: d.names_of(&b.y),
                            z: d.names_of(&b.z),
                            w: d.names_of(&b.w),
                            direction: b.way,
                        }),
                        Some(format!("({} ⊥ {} | {}) in {}", c.a.join(","), c.b.join(","), c.given.join(","), c.graph_tag)),
                        None,
                    ),
                    StepKind::ConditionSplit { node } => (None, None, Some(node.clone())),
                    StepKind::Marginalize { sym } => (None, None, Some(format!("{}{}", sym.node, "'".repeat(sym.primes as usize)))),
                    StepKind::Bayes { pivot } => (None, None, Some(pivot.clone())),
                };
                TraceRecord {
                    step: i + 1,
                    kind: s.kind.name(),
                    binding,
                    query,
                    parameter,
                    before: render(&s.before, fmt),
                    after: render(&s.after, fmt),
                }
            })
            .collect()
    }
}

fn subsets(set: &VarSet) -> Vec<VarSet> {
    let items: Vec<_> = set.iter().copied().collect();
    let mut out: Vec<VarSet> = (1u32..(1 << items.len()))
        .map(|mask| items.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, &v)| v).collect())
        .collect();
    // smallest first, then canonical
    out.sort_by(|a: &VarSet, b: &VarSet| a.len().cmp(&b.len()).then_with(|| a.iter().cmp(b.iter())));
    out
}

fn goal_met(d: &CausalDiagram, goal: &Goal, e: &ProbExpr, order: &VarOrder) -> bool {
    match goal {
        Goal::DoFree => e.is_do_free(),
        Goal::SSound => e.terms().iter().all(|t| {
            let sel = |s: &Slot| d.try_id(&s.node).map_or(false, |v| d.kind(v) == NodeKind::Selection);
            let conditions_on_s = t.given.iter().any(sel);
            !t.outcome.iter().any(sel) && !t.dos.iter().any(sel) && (!conditions_on_s || t.is_do_free())
        }),
        Goal::Target(target) => equivalent(e, target, order),
    }
}

struct Searcher<'a> {
    d: &'a CausalDiagram,
    order: VarOrder,
    certs: HashMap<(RuleId, RuleBinding), SeparationCertificate>,
}

impl<'a> Searcher<'a> {
    fn cert(&mut self, rule: RuleId, b: &RuleBinding) -> Option<SeparationCertificate> {
        let key = (rule, RuleBinding { inserted: Vec::new(), ..b.clone() });
        if let Some(c) = self.certs.get(&key) {
            return Some(c.clone());
        }
        let c = rule_applicable(self.d, rule, b).ok()?;
        self.certs.insert(key, c.clone());
        Some(c)
    }

    fn successors(&mut self, e: &ProbExpr) -> Vec<(StepKind, usize, ProbExpr)> {
        let d = self.d;
        let scopes = term_scopes(e);
        let mut out = Vec::new();
        let sel = d.selection_nodes();
        let sets: Vec<Option<(VarSet, VarSet, VarSet)>> = scopes
            .iter()
            .map(|(t, _)| {
                let f = |s: &[Slot]| -> Option<VarSet> { s.iter().map(|x| d.try_id(&x.node)).collect() };
                Some((f(&t.outcome)?, f(&t.given)?, f(&t.dos)?))
            })
            .collect();
        let insertable = |t: &crate::expr::ProbTerm, scope: &std::collections::BTreeSet<Sym>, allow_sel: bool| -> Vec<(crate::graph::NodeId, Sym)> {
            scope
                .iter()
                .filter(|s| !t.mentions(&s.node))
                .filter_map(|s| d.try_id(&s.node).map(|v| (v, s.clone())))
                .filter(|(v, _)| d.kind(*v) == NodeKind::Observed || (allow_sel && d.kind(*v) == NodeKind::Selection))
                .collect()
        };
        for rule in [RuleId::R1, RuleId::R2, RuleId::R3] {
            for way in [Way::Forward, Way::Backward] {
                for (site, (t, scope)) in scopes.iter().enumerate() {
                    let Some((y, given, dos)) = &sets[site] else { continue };
                    let mut bindings: Vec<RuleBinding> = Vec::new();
                    match (rule, way) {
                        (RuleId::R1, Way::Forward) => {
                            for z in subsets(given) {
                                let w = given.difference(&z).copied().collect();
                                bindings.push(RuleBinding::new(dos.clone(), y.clone(), z, w, way));
                            }
                        }
                        (RuleId::R2, Way::Forward) | (RuleId::R3, Way::Forward) => {
                            for z in subsets(dos) {
                                let x = dos.difference(&z).copied().collect();
                                bindings.push(RuleBinding::new(x, y.clone(), z, given.clone(), way));
                            }
                        }
                        (RuleId::R2, Way::Backward) => {
                            let movable: VarSet = given.difference(&sel).copied().collect();
                            for z in subsets(&movable) {
                                let w = given.difference(&z).copied().collect();
                                bindings.push(RuleBinding::new(dos.clone(), y.clone(), z, w, way));
                            }
                        }
                        (RuleId::R1, Way::Backward) | (RuleId::R3, Way::Backward) => {
                            for (v, sym) in insertable(t, scope, rule == RuleId::R1) {
                                let mut b = RuleBinding::new(dos.clone(), y.clone(), [v].into(), given.clone(), way);
                                b.inserted = vec![Slot::sym(&sym)];
                                bindings.push(b);
                            }
                        }
                    }
                    for b in bindings {
                        let Some(cert) = self.cert(rule, &b) else { continue };
                        if !cert.separated() {
                            continue;
                        }
                        let Some(new) = rewrite_term(d, t, rule, &b) else { continue };
                        let after = normalize(&replace_term(e, site, &ProbExpr::Term(new)), &self.order);
                        out.push((StepKind::Rule { rule, binding: b, certificate: cert }, site, after));
                    }
                }
            }
        }
        for (site, (t, _)) in scopes.iter().enumerate() {
            for v in d.ids().filter(|&v| d.kind(v) == NodeKind::Observed) {
                let node = d.name(v);
                if t.mentions(node) {
                    continue;
                }
                if let Some(after) = condition_split(e, site, node, &self.order) {
                    out.push((StepKind::ConditionSplit { node: node.to_string() }, site, after));
                }
            }
        }
        let mut sums = Vec::new();
        e.visit(&mut |x| {
            if let ProbExpr::Sum { over, .. } = x {
                sums.push(over.clone());
            }
        });
        for (site, over) in sums.iter().enumerate() {
            for sym in over {
                if let Some(after) = marginalize(e, site, sym, &self.order) {
                    out.push((StepKind::Marginalize { sym: sym.clone() }, site, after));
                }
            }
        }
        for (site, (t, _)) in scopes.iter().enumerate() {
            for s in &t.given {
                if d.try_id(&s.node).map_or(true, |v| sel.contains(&v)) {
                    continue;
                }
                if let Some(after) = bayes(e, site, &s.node, &self.order) {
                    out.push((StepKind::Bayes { pivot: s.node.clone() }, site, after));
                }
            }
        }
        out
    }
}

struct Node {
    expr: ProbExpr,
    parent: Option<(usize, DerivationStep)>,
}

fn assemble(d: &CausalDiagram, arena: &[Node], start: &ProbExpr, mut i: usize) -> Derivation {
    let end = arena[i].expr.clone();
    let mut steps = Vec::new();
    while let Some((p, step)) = &arena[i].parent {
        steps.push(step.clone());
        i = *p;
    }
    steps.reverse();
    Derivation { diagram: d.clone(), start: start.clone(), end, steps }
}

fn run(
    d: &CausalDiagram,
    start: &ProbExpr,
    goal: &Goal,
    budget: Budget,
    score: Option<&dyn Fn(&ProbExpr) -> i64>,
) -> Result<Derivation, DeriveError> {
    let order = VarOrder::from_diagram(d);
    if let Goal::Target(t) = goal {
        if t.free_syms() != start.free_syms() {
            return Err(DeriveError::MalformedGoal("target and start have different free variables".into()));
        }
    }
    for t in start.terms() {
        for s in t.slots() {
            if d.try_id(&s.node).is_none() {
                return Err(DeriveError::MalformedGoal(format!("unknown node `{}` in start", s.node)));
            }
        }
    }
    let start_n = normalize(start, &order);
    let mut arena = vec![Node { expr: start_n.clone(), parent: None }];
    if goal_met(d, goal, &start_n, &order) {
        return Ok(assemble(d, &arena, start, 0));
    }
    let mut seen: HashSet<String> = HashSet::from([render(&start_n, Format::Structured)]);
    let mut searcher = Searcher { d, order: order.clone(), certs: HashMap::new() };
    let mut frontier = vec![0usize];
    // (score, node) of the best success so far, and the depth limit it sets
    let mut best: Option<(i64, usize)> = None;
    let mut limit = budget.depth;
    for depth in 1..=budget.depth {
        if depth > limit {
            break;
        }
        let mut next = Vec::new();
        'level: for &i in &frontier {
            let expr = arena[i].expr.clone();
            for (kind, site, after) in searcher.successors(&expr) {
                if !seen.insert(render(&after, Format::Structured)) {
                    continue;
                }
                let step = DerivationStep { kind, site, before: expr.clone(), after: after.clone() };
                arena.push(Node { expr: after.clone(), parent: Some((i, step)) });
                let idx = arena.len() - 1;
                if goal_met(d, goal, &after, &order) {
                    match score {
                        None => return Ok(assemble(d, &arena, start, idx)),
                        Some(f) => {
                            let s = f(&after);
                            if best.map_or(true, |(b, _)| s < b) {
                                best = Some((s, idx));
                            }
                            if limit == budget.depth {
                                limit = (depth + 2).min(budget.depth);
                            }
                        }
                    }
                    continue;
                }
                next.push(idx);
                if next.len() >= budget.width {
                    break 'level;
                }
            }
        }
        frontier = next;
        if frontier.is_empty() {
            break;
        }
    }
    match best {
        Some((_, idx)) => Ok(assemble(d, &arena, start, idx)),
        None => Err(DeriveError::BudgetExhausted { depth: budget.depth, explored: arena.len(), frontier: frontier.len() }),
    }
}

/// Breadth-first search for the shallowest derivation reaching `goal`.
pub fn derive(d: &CausalDiagram, start: &ProbExpr, goal: &Goal, budget: Budget) -> Result<Derivation, DeriveError> {
    run(d, start, goal, budget, None)
}

/// As `derive`, but after the first success keeps searching two more levels
/// and returns the success with the lowest `score` (earliest on ties).
pub fn derive_preferring(
    d: &CausalDiagram,
    start: &ProbExpr,
    goal: &Goal,
    budget: Budget,
    score: &dyn Fn(&ProbExpr) -> i64,
) -> Result<Derivation, DeriveError> {
    run(d, start, goal, budget, Some(score))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_graph;
    use crate::expr::parse_expr;

    fn g(s: &str) -> CausalDiagram {
        parse_graph(s).unwrap().into_diagram()
    }

    #[test]
    fn fig1a_single_exchange() {
        let d = g("nodes: X, M, Y\nX -> M\nM -> Y\nX -> Y");
        let der = derive(&d, &parse_expr("P(Y | do(X))").unwrap(), &Goal::DoFree, Budget::default()).unwrap();
        assert_eq!(der.steps.len(), 1);
        assert_eq!(der.end.to_string(), "P(y | x)");
        assert_eq!(der.replay().unwrap(), der.end);
    }

    #[test]
    fn fig1b_backdoor() {
        let d = g("nodes: W, X, M, Y\nW -> X\nW -> M\nW -> Y\nX -> M\nM -> Y\nX -> Y");
        let der = derive(&d, &parse_expr("P(Y | do(X))").unwrap(), &Goal::DoFree, Budget::default()).unwrap();
        assert_eq!(der.end.to_string(), "Σ_w P(w) P(y | w, x)");
        assert_eq!(der.replay().unwrap(), der.end);
        let trace = der.trace(Format::Text);
        assert_eq!(trace[0].kind, "condition-split");
    }

    #[test]
    fn bow_not_found() {
        let d = g("nodes: X, Y\nX -> Y\nX <-> Y");
        let r = derive(&d, &parse_expr("P(Y | do(X))").unwrap(), &Goal::DoFree, Budget { depth: 4, width: 256 });
        assert!(matches!(r, Err(DeriveError::BudgetExhausted { .. })));
    }

    #[test]
    fn deterministic() {
        let d = g("nodes: W, X, M, Y\nW -> X\nW -> M\nW -> Y\nX -> M\nM -> Y\nX -> Y");
        let e = parse_expr("P(Y | do(X))").unwrap();
        assert_eq!(derive(&d, &e, &Goal::DoFree, Budget::default()), derive(&d, &e, &Goal::DoFree, Budget::default()));
    }

    #[test]
    fn target_goal() {
        let d = g("nodes: X, M, Y\nX -> M\nM -> Y\nX -> Y");
        let target = parse_expr("sum{M} P(M | X) P(Y | X, M)").unwrap();
        let der = derive(&d, &parse_expr("P(Y | do(X))").unwrap(), &Goal::Target(target.clone()), Budget::default()).unwrap();
        assert!(equivalent(&der.end, &target, &VarOrder::from_diagram(&d)));
        assert!(matches!(
            derive(&d, &parse_expr("P(Y | do(X))").unwrap(), &Goal::Target(parse_expr("P(Y)").unwrap()), Budget::default()),
            Err(DeriveError::MalformedGoal(_))
        ));
    }
}
