//! Controlled and natural direct effects: estimands, the two assumption sets,
//! and the composition of the natural direct effect from identified parts.

use std::fmt;

use thiserror::Error;

use crate::expr::{normalize, Estimand, ProbExpr, ProbTerm, Slot, Sym, VarOrder};
use crate::graph::{certify, CausalDiagram, Direction, GraphError, Mutilation, NodeId, NodeKind, SeparationCertificate, VarSet};
use crate::identify::{identify_effect, subsets_upto, Hedge, IdentifyResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MediationQuery {
    pub treatment: String,
    pub mediator: String,
    pub outcome: String,
    pub active: u32,
    pub reference: u32,
}

impl MediationQuery {
    pub fn new(treatment: &str, mediator: &str, outcome: &str) -> Self {
        MediationQuery { treatment: treatment.into(), mediator: mediator.into(), outcome: outcome.into(), active: 1, reference: 0 }
    }

    /// Ids of X, M, Y plus warnings for unusual orderings.
    pub fn resolve(&self, d: &CausalDiagram) -> Result<(NodeId, NodeId, NodeId, Vec<String>), MediationError> {
        let id = |n: &str| -> Result<NodeId, MediationError> {
            let v = d.id(n)?;
            if d.kind(v) != NodeKind::Observed {
                return Err(MediationError::Query(format!("`{n}` is not an observed node")));
            }
            Ok(v)
        };
        let (x, m, y) = (id(&self.treatment)?, id(&self.mediator)?, id(&self.outcome)?);
        if x == m || m == y || x == y {
            return Err(MediationError::Query("treatment, mediator and outcome must be distinct".into()));
        }
        let mut warnings = Vec::new();
        if !d.descendants(&[x].into()).contains(&m) {
            warnings.push(format!("{} is not a descendant of {}", self.mediator, self.treatment));
        }
        if !d.descendants(&[m].into()).contains(&y) {
            warnings.push(format!("{} is not a descendant of {}", self.outcome, self.mediator));
        }
        Ok((x, m, y, warnings))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MediationError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("invalid query: {0}")]
    Query(String),
    #[error("not identifiable: {0}")]
    NotIdentifiable(Hedge),
    #[error("no covariate set satisfies assumption set A ({} candidates tried)", .0.len())]
    SearchExhausted(Vec<AssumptionReport>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AssumptionSet {
    A,
    B,
}

impl fmt::Display for AssumptionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AssumptionSet::A => "A",
            AssumptionSet::B => "B",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Evidence {
    /// Members of the covariate set that descend from the treatment.
    Descendants(Vec<String>),
    Separation(SeparationCertificate),
    Identification(IdentifyResult),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResult {
    pub name: String,
    pub holds: bool,
    pub evidence: Evidence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionReport {
    pub set_name: AssumptionSet,
    /// Covariate set per condition, in condition order.
    pub w_used: Vec<Vec<String>>,
    pub conditions: Vec<ConditionResult>,
    pub holds: bool,
}

impl AssumptionReport {
    fn new(set_name: AssumptionSet, w_used: Vec<Vec<String>>, conditions: Vec<ConditionResult>) -> Self {
        let holds = conditions.iter().all(|c| c.holds);
        AssumptionReport { set_name, w_used, conditions, holds }
    }

    pub fn condition(&self, name: &str) -> Option<&ConditionResult> {
        self.conditions.iter().find(|c| c.name == name)
    }
}

fn no_descendants(d: &CausalDiagram, name: &str, x: NodeId, w: &VarSet) -> Result<ConditionResult, GraphError> {
    let desc = d.relatives(&[x].into(), Direction::Descendants, false)?;
    let bad: VarSet = w.intersection(&desc).copied().collect();
    Ok(ConditionResult { name: name.into(), holds: bad.is_empty(), evidence: Evidence::Descendants(d.names_of(&bad)) })
}

fn separation(
    d: &CausalDiagram,
    name: &str,
    cut: (&VarSet, &VarSet),
    a: NodeId,
    b: NodeId,
    given: &VarSet,
) -> Result<ConditionResult, GraphError> {
    let c = certify(d, &Mutilation::new(d, cut.0, cut.1), &[a].into(), &[b].into(), given)?;
    Ok(ConditionResult { name: name.into(), holds: c.separated(), evidence: Evidence::Separation(c) })
}

fn identification(d: &CausalDiagram, name: &str, y: &VarSet, x: &VarSet, w: &VarSet) -> Result<ConditionResult, GraphError> {
    let r = identify_effect(d, y, x, w)?;
    Ok(ConditionResult { name: name.into(), holds: r.is_identified(), evidence: Evidence::Identification(r) })
}

fn check_w(d: &CausalDiagram, w: &VarSet, ids: [NodeId; 3]) -> Result<(), MediationError> {
    d.check_known(w)?;
    if let Some(&v) = w.iter().find(|&&v| d.kind(v) != NodeKind::Observed) {
        return Err(MediationError::Query(format!("`{}` is not an observed node", d.name(v))));
    }
    if let Some(v) = ids.iter().find(|v| w.contains(v)) {
        return Err(GraphError::OverlappingSets(d.name(*v).to_string()).into());
    }
    Ok(())
}

/// Assumption set A with one covariate set for every condition.
pub fn check_set_a(d: &CausalDiagram, q: &MediationQuery, w: &VarSet) -> Result<AssumptionReport, MediationError> {
    check_set_a_split(d, q, w, w, w)
}

/// Assumption set A with separate covariate sets for the blocking condition
/// (A-2) and the two identification conditions (A-3, A-4). A-1 applies to
/// their union.
pub fn check_set_a_split(
    d: &CausalDiagram,
    q: &MediationQuery,
    w2: &VarSet,
    w3: &VarSet,
    w4: &VarSet,
) -> Result<AssumptionReport, MediationError> {
    let (x, m, y, _) = q.resolve(d)?;
    for w in [w2, w3, w4] {
        check_w(d, w, [x, m, y])?;
    }
    let all: VarSet = w2.iter().chain(w3).chain(w4).copied().collect();
    let xs: VarSet = [x].into();
    let given: VarSet = w2.iter().copied().chain([x]).collect();
    let conditions = vec![
        no_descendants(d, "A-1", x, &all)?,
        separation(d, "A-2", (&xs, &[m].into()), m, y, &given)?,
        identification(d, "A-3", &[m].into(), &xs, w3)?,
        identification(d, "A-4", &[y].into(), &[x, m].into(), w4)?,
    ];
    let used = vec![d.names_of(&all), d.names_of(w2), d.names_of(w3), d.names_of(w4)];
    Ok(AssumptionReport::new(AssumptionSet::A, used, conditions))
}

/// Assumption set B: one covariate set, three back-door conditions.
pub fn check_set_b(d: &CausalDiagram, q: &MediationQuery, w: &VarSet) -> Result<AssumptionReport, MediationError> {
    let (x, m, y, _) = q.resolve(d)?;
    check_w(d, w, [x, m, y])?;
    let none = VarSet::new();
    let wx: VarSet = w.iter().copied().chain([x]).collect();
    let conditions = vec![
        no_descendants(d, "B-1", x, w)?,
        separation(d, "B-2", (&none, &[x].into()), x, m, w)?,
        separation(d, "B-3", (&none, &[m].into()), m, y, &wx)?,
    ];
    let used = vec![d.names_of(w); 3];
    Ok(AssumptionReport::new(AssumptionSet::B, used, conditions))
}

fn expectation(y: &str, e: &ProbExpr) -> ProbExpr {
    ProbExpr::expectation(Sym::new(y), e.clone())
}

/// `E(Y | do(X=active, M=m)) − E(Y | do(X=reference, M=m))` with both terms
/// identified; `m = None` leaves the mediator value symbolic.
pub fn cde_estimand(d: &CausalDiagram, q: &MediationQuery, m: Option<u32>) -> Result<IdentifyResult, MediationError> {
    let (x, mid, y, _) = q.resolve(d)?;
    let r = identify_effect(d, &[y].into(), &[x, mid].into(), &VarSet::new())?;
    let IdentifyResult::Identified { estimand, mut trace } = r else { return Ok(r) };
    let mut e = estimand.expr;
    if let Some(v) = m {
        e = e.bind(&Sym::new(&q.mediator), v);
    }
    let at = |v: u32| expectation(&q.outcome, &e.bind(&Sym::new(&q.treatment), v));
    let cde = normalize(&ProbExpr::difference(at(q.active), at(q.reference)), &VarOrder::from_diagram(d));
    trace.push("contrast of the two joint interventions".into());
    Ok(IdentifyResult::Identified { estimand: Estimand::new(cde), trace })
}

#[derive(Debug, Clone, PartialEq)]
pub struct NdeResult {
    pub estimand: Estimand,
    /// Covariate set adjusted for in the outer sum.
    pub w: Vec<String>,
    /// Identified `P(m | do(x), w)`.
    pub mediator_term: Estimand,
    /// Identified `P(y | do(x, m), w)`.
    pub outcome_term: Estimand,
    pub report: AssumptionReport,
    pub warnings: Vec<String>,
}

/// Natural direct effect `E(Y_{x, M_x'}) − E(Y_x')` as
/// `Σ_w Σ_m [E(Y | do(x,m), w) − E(Y | do(x',m), w)] P(m | do(x'), w) P(w)`
/// for the first covariate set satisfying assumption set A.
pub fn nde_estimand(d: &CausalDiagram, q: &MediationQuery) -> Result<NdeResult, MediationError> {
    let (x, m, y, warnings) = q.resolve(d)?;
    let desc = d.descendants(&[x].into());
    let pool: VarSet = d.observed().into_iter().filter(|v| !desc.contains(v) && ![m, y].contains(v)).collect();
    let mut tried = Vec::new();
    for w in subsets_upto(&pool, 4) {
        let report = check_set_a(d, q, &w)?;
        if !report.holds {
            tried.push(report);
            continue;
        }
        let pick = |name: &str| match &report.condition(name).expect("present").evidence {
            Evidence::Identification(IdentifyResult::Identified { estimand, .. }) => estimand.clone(),
            _ => unreachable!("condition holds"),
        };
        let (a3, a4) = (pick("A-3"), pick("A-4"));
        let e = compose(d, q, &w, &a3.expr, &a4.expr);
        return Ok(NdeResult { estimand: Estimand::new(e), w: d.names_of(&w), mediator_term: a3, outcome_term: a4, report, warnings });
    }
    Err(MediationError::SearchExhausted(tried))
}

/// Assembles the contrast from the identified mediator and outcome terms.
pub fn compose(d: &CausalDiagram, q: &MediationQuery, w: &VarSet, mediator: &ProbExpr, outcome: &ProbExpr) -> ProbExpr {
    let xs = Sym::new(&q.treatment);
    let contrast = ProbExpr::difference(
        expectation(&q.outcome, &outcome.bind(&xs, q.active)),
        expectation(&q.outcome, &outcome.bind(&xs, q.reference)),
    );
    let mut fs = vec![contrast, mediator.bind(&xs, q.reference)];
    if !w.is_empty() {
        let slots = w.iter().map(|&v| Slot::free(d.name(v))).collect();
        fs.push(ProbExpr::Term(ProbTerm::new(slots, Vec::new(), Vec::new())));
    }
    let over: Vec<Sym> = std::iter::once(Sym::new(&q.mediator)).chain(w.iter().map(|&v| Sym::new(d.name(v)))).collect();
    normalize(&ProbExpr::sum(over, ProbExpr::product(fs)), &VarOrder::from_diagram(d))
}

#[cfg(test)]
mod tests;
