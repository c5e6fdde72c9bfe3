use std::fmt;

use thiserror::Error;

use super::{invariant_term, Regime, StudyDescriptor};
use crate::docalculus::{rule_applicable, RuleBinding, RuleId, Way};
use crate::expr::{normalize, ProbExpr, ProbTerm, Slot, Sym, VarOrder};
use crate::graph::{CausalDiagram, GraphError, NodeKind, SeparationCertificate, VarSet};
use crate::identify::{backdoor_admissible, subsets_upto};

/// One sub-relation of the chosen decomposition and the study that
/// supplies it.
#[derive(Debug, Clone, PartialEq)]
pub struct SubRelation {
    pub term: ProbTerm,
    pub study: String,
    /// Selection nodes of the study separated from the term's outcome.
    pub certificate: SeparationCertificate,
}

/// What one study can and cannot supply, over every candidate term.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudyContribution {
    pub label: String,
    pub can: Vec<String>,
    /// Term and the reason it is refused.
    pub cannot: Vec<(String, String)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthesisPlan {
    pub query: ProbTerm,
    pub decomposition: String,
    pub sub_relations: Vec<SubRelation>,
    /// The query in terms of study populations, each tagged by its label.
    pub composition: ProbExpr,
    pub contributions: Vec<StudyContribution>,
}

impl SynthesisPlan {
    pub fn studies_used(&self) -> Vec<String> {
        let mut v: Vec<String> = self.sub_relations.iter().map(|s| s.study.clone()).collect();
        v.sort();
        v.dedup();
        v
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid query: {0}")]
    Query(String),
    #[error("no decomposition is covered by the studies; uncovered: {}", .missing.join(", "))]
    Unsynthesizable { missing: Vec<String>, contributions: Vec<StudyContribution> },
}

struct Decomposition {
    name: String,
    over: Vec<Sym>,
    terms: Vec<ProbTerm>,
}

fn slots(d: &CausalDiagram, s: &VarSet) -> Vec<Slot> {
    s.iter().map(|&v| Slot::free(d.name(v))).collect()
}

fn union(a: &VarSet, b: &VarSet) -> VarSet {
    a.union(b).copied().collect()
}

/// Candidate decompositions, fewest sub-relations first: the query itself,
/// back-door adjustments, then factorizations through descendants of X.
fn decompositions(d: &CausalDiagram, y: &VarSet, x: &VarSet, given: &VarSet) -> Result<Vec<Decomposition>, GraphError> {
    let term = |o: &VarSet, g: &VarSet, dos: &VarSet| ProbTerm::new(slots(d, o), slots(d, g), slots(d, dos));
    let none = VarSet::new();
    let mut out = vec![Decomposition { name: "direct".into(), over: Vec::new(), terms: vec![term(y, given, x)] }];
    if !given.is_empty() {
        return Ok(out);
    }
    let desc = d.descendants(x);
    let syms = |w: &VarSet| w.iter().map(|&v| Sym::new(d.name(v))).collect::<Vec<_>>();
    let names = |w: &VarSet| d.names_of(w).join(", ");
    let pool: VarSet = d.observed().into_iter().filter(|v| !desc.contains(v) && !y.contains(v)).collect();
    let mut adjust = Vec::new();
    for w in subsets_upto(&pool, 4) {
        if backdoor_admissible(d, x, y, &w)? {
            let mut terms = vec![term(y, &union(x, &w), &none)];
            if !w.is_empty() {
                terms.push(term(&w, &none, &none));
            }
            adjust.push(Decomposition { name: format!("back-door {{{}}}", names(&w)), over: syms(&w), terms });
        }
    }
    let pool: VarSet = desc.into_iter().filter(|v| d.kind(*v) == NodeKind::Observed && !x.contains(v) && !y.contains(v)).collect();
    let mut chain = Vec::new();
    for w in subsets_upto(&pool, 4).into_iter().filter(|w| !w.is_empty()) {
        let terms = vec![term(y, &w, x), term(&w, &none, x)];
        chain.push(Decomposition { name: format!("through {{{}}}", names(&w)), over: syms(&w), terms });
    }
    adjust.sort_by_key(|c| c.terms.len());
    out.extend(adjust);
    out.extend(chain);
    Ok(out)
}

/// Whether the study's own population yields `t`, or why not.
fn available(d: &CausalDiagram, s: &StudyDescriptor, t: &ProbTerm) -> Result<(), String> {
    let ids = |ns: Vec<&str>| -> VarSet { ns.into_iter().filter_map(|n| d.try_id(n)).collect() };
    let (a, b, c) = (ids(t.outcome_nodes()), ids(t.given_nodes()), ids(t.do_nodes()));
    let all = union(&union(&a, &b), &c);
    if let Some(&v) = all.iter().find(|v| !s.measured.contains(v)) {
        return Err(format!("{} not measured", d.name(v)));
    }
    match &s.regime {
        Regime::Observational if !c.is_empty() => Err("observational study, interventional term".into()),
        Regime::Observational => Ok(()),
        Regime::Randomized(r) => {
            if !c.is_subset(r) {
                return Err("intervenes on a variable the study did not randomize".into());
            }
            let extra: VarSet = r.difference(&c).copied().collect();
            if !extra.is_disjoint(&a) {
                return Err("outcome was randomized".into());
            }
            // P(a | b, do(c)) = P(a | b, do(c + e2)) = P(a | b - e1, do(c + e1 + e2))
            let e1: VarSet = extra.intersection(&b).copied().collect();
            let e2: VarSet = extra.difference(&b).copied().collect();
            let ok = |rule, bind: RuleBinding| rule_applicable(d, rule, &bind).map_or(false, |cert| cert.separated());
            if !e2.is_empty() && !ok(RuleId::R3, RuleBinding::new(c.clone(), a.clone(), e2.clone(), b.clone(), Way::Forward)) {
                return Err("randomization is not ignorable for this term".into());
            }
            let rest: VarSet = b.difference(&e1).copied().collect();
            if !e1.is_empty() && !ok(RuleId::R2, RuleBinding::new(union(&c, &e2), a.clone(), e1, rest, Way::Forward)) {
                return Err("randomized condition does not act as an observation".into());
            }
            Ok(())
        }
    }
}

fn supply(d: &CausalDiagram, s: &StudyDescriptor, t: &ProbTerm) -> Result<Result<SeparationCertificate, String>, GraphError> {
    if let Err(why) = available(d, s, t) {
        return Ok(Err(why));
    }
    let cert = invariant_term(&s.diagram, t)?;
    Ok(if cert.separated() { Ok(cert) } else { Err("population differs on this term".into()) })
}

struct Shown<'a>(&'a ProbTerm);

impl fmt::Display for Shown<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", ProbExpr::Term(self.0.clone()))
    }
}

/// Builds the query from sub-relations each supplied, unchanged, by one
/// study. Decompositions are tried in order and studies in the given order.
pub fn meta_synthesize(target: &CausalDiagram, query: &ProbTerm, studies: &[StudyDescriptor]) -> Result<SynthesisPlan, SynthesisError> {
    let ids = |ns: Vec<&str>| -> Result<VarSet, GraphError> { ns.into_iter().map(|n| target.id(n)).collect() };
    let (y, given, x) = (ids(query.outcome_nodes())?, ids(query.given_nodes())?, ids(query.do_nodes())?);
    target.check_disjoint(&[&y, &given, &x])?;
    if y.is_empty() || y.iter().chain(&given).chain(&x).any(|&v| target.kind(v) != NodeKind::Observed) {
        return Err(SynthesisError::Query("the query must range over observed variables".into()));
    }
    for s in studies {
        if s.diagram.base() != target {
            return Err(SynthesisError::Query(format!("study `{}` is not drawn against this target", s.label)));
        }
    }
    let cands = decompositions(target, &y, &x, &given)?;
    let mut contributions: Vec<StudyContribution> =
        studies.iter().map(|s| StudyContribution { label: s.label.clone(), can: Vec::new(), cannot: Vec::new() }).collect();
    let mut seen = std::collections::BTreeSet::new();
    let mut chosen: Option<(usize, Vec<SubRelation>)> = None;
    let mut missing = Vec::new();
    for (k, cand) in cands.iter().enumerate() {
        let mut subs = Vec::new();
        for t in &cand.terms {
            let fresh = seen.insert(t.clone());
            let mut found = None;
            for (s, c) in studies.iter().zip(contributions.iter_mut()) {
                let r = supply(target, s, t)?;
                if fresh {
                    match &r {
                        Ok(_) => c.can.push(Shown(t).to_string()),
                        Err(why) => c.cannot.push((Shown(t).to_string(), why.clone())),
                    }
                }
                if let (None, Ok(cert)) = (&found, r) {
                    found = Some(SubRelation { term: t.clone(), study: s.label.clone(), certificate: cert });
                }
            }
            match found {
                Some(sub) => subs.push(sub),
                None if chosen.is_none() => missing.push(Shown(t).to_string()),
                None => {}
            }
        }
        if chosen.is_none() && subs.len() == cand.terms.len() {
            chosen = Some((k, subs));
        }
    }
    let Some((k, subs)) = chosen else {
        missing.dedup();
        return Err(SynthesisError::Unsynthesizable { missing, contributions });
    };
    let cand = &cands[k];
    let factors = subs.iter().map(|s| ProbExpr::Term(s.term.clone().with_pop(&s.study))).collect();
    let composition = normalize(&ProbExpr::sum(cand.over.clone(), ProbExpr::product(factors)), &VarOrder::from_diagram(target));
    Ok(SynthesisPlan { query: query.clone(), decomposition: cand.name.clone(), sub_relations: subs, composition, contributions })
}
