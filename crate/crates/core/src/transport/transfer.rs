use thiserror::Error;

use super::SelectionDiagram;
use crate::docalculus::{derive_preferring, Budget, Derivation, DeriveError, Goal};
use crate::expr::{normalize, ProbExpr, ProbTerm, Slot, VarOrder, SOURCE, TARGET};
use crate::graph::{certify, GraphError, Mutilation, NodeKind, SeparationCertificate, VarSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TransportError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("not transportable within the search budget: {0}")]
    NotFound(DeriveError),
    #[error("invalid query: {0}")]
    Query(String),
}

/// A transport formula: source terms are experimental findings, target
/// terms are do-free observations of the target population.
#[derive(Debug, Clone, PartialEq)]
pub struct TransportFormula {
    pub expr: ProbExpr,
    /// The derivation in the selection diagram, before relabelling.
    pub derivation: Derivation,
}

impl TransportFormula {
    /// Every target term is do-free.
    pub fn target_terms_do_free(&self) -> bool {
        self.expr.terms().iter().all(|t| t.pop != TARGET || t.is_do_free())
    }
}

fn is_selection(sd: &SelectionDiagram, s: &Slot) -> bool {
    sd.diagram().try_id(&s.node).map_or(false, |v| sd.diagram().kind(v) == NodeKind::Selection)
}

/// Terms that condition on a selection node become target terms without it.
fn relabel(sd: &SelectionDiagram, e: &ProbExpr) -> ProbExpr {
    let e = e.map_terms(&mut |t| {
        let mut t = t.clone();
        let n = t.given.len();
        t.given.retain(|s| !is_selection(sd, s));
        let pop = if t.given.len() < n { TARGET } else { SOURCE };
        ProbExpr::Term(t.with_pop(pop))
    });
    normalize(&e, &VarOrder::from_diagram(sd.base()))
}

/// Lower is better: outcome variables of selection-bearing terms that no
/// selection node points at, then the number of terms.
fn preference(sd: &SelectionDiagram, e: &ProbExpr) -> i64 {
    let pointed: Vec<String> = sd.selection_edges().into_iter().map(|(_, t)| t).collect();
    let mut off = 0;
    let terms = e.terms();
    for t in &terms {
        if t.given.iter().any(|s| is_selection(sd, s)) {
            off += t.outcome.iter().filter(|s| !pointed.contains(&s.node)).count() as i64;
        }
    }
    off * 100 + terms.len() as i64
}

/// Transports `P(y | do(x))` from the experimental source to the target.
pub fn transport_effect(sd: &SelectionDiagram, y: &VarSet, x: &VarSet, budget: Budget) -> Result<TransportFormula, TransportError> {
    let d = sd.diagram();
    d.check_known(y)?;
    d.check_known(x)?;
    d.check_disjoint(&[y, x])?;
    if let Some(&v) = y.iter().chain(x).find(|&&v| d.kind(v) != NodeKind::Observed) {
        return Err(TransportError::Query(format!("`{}` is not an observed variable", d.name(v))));
    }
    let slots = |s: &VarSet| s.iter().map(|&v| Slot::free(d.name(v))).collect::<Vec<_>>();
    let start = ProbExpr::Term(ProbTerm::new(slots(y), slots(&sd.selection_nodes()), slots(x)));
    let score = |e: &ProbExpr| preference(sd, e);
    let derivation = derive_preferring(d, &start, &Goal::SSound, budget, &score).map_err(TransportError::NotFound)?;
    let expr = relabel(sd, &derivation.end);
    Ok(TransportFormula { expr, derivation })
}

/// Whether `t` is the same in every population the diagram describes:
/// the selection nodes are separated from its outcome given its conditions
/// once its do-variables lose their incoming arcs. Returns the certificate.
pub fn invariant_term(sd: &SelectionDiagram, t: &ProbTerm) -> Result<SeparationCertificate, GraphError> {
    let d = sd.diagram();
    let ids = |ns: Vec<&str>| -> Result<VarSet, GraphError> { ns.into_iter().map(|n| d.id(n)).collect() };
    let (y, given, dos) = (ids(t.outcome_nodes())?, ids(t.given_nodes())?, ids(t.do_nodes())?);
    let cond: VarSet = given.union(&dos).copied().collect();
    certify(d, &Mutilation::new(d, &dos, &VarSet::new()), &sd.selection_nodes(), &y, &cond)
}
