use super::{invariant_term, SelectionDiagram};
use crate::expr::{normalize, ProbExpr, ProbTerm, Slot, Sym, VarOrder, SOURCE, TARGET};
use crate::graph::{GraphError, NodeId, NodeKind, SeparationCertificate, VarSet};

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedFactor {
    pub term: ProbTerm,
    /// Certificate of the invariance test; separated means the source
    /// estimate is reused.
    pub certificate: SeparationCertificate,
}

impl AdaptedFactor {
    pub fn from_source(&self) -> bool {
        self.term.pop == SOURCE
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdaptationPlan {
    pub factors: Vec<AdaptedFactor>,
    /// The query assembled from the factors.
    pub answer: ProbExpr,
    /// Variables the target sample must record.
    pub target_measurements: Vec<String>,
    pub source_measurements: Vec<String>,
}

/// Factorizes the observed joint along a topological order, keeps the
/// factors the query depends on, and reuses every factor the selection
/// nodes cannot reach. Only the remaining factors need target data.
pub fn adapt_factorization(sd: &SelectionDiagram, query: &ProbTerm) -> Result<AdaptationPlan, GraphError> {
    let base = sd.base();
    if !query.is_do_free() {
        return Err(GraphError::MalformedDecl { line: 0, msg: "adaptation queries are observational".into() });
    }
    let ids = |ns: Vec<&str>| -> Result<VarSet, GraphError> { ns.into_iter().map(|n| base.id(n)).collect() };
    let (y, given) = (ids(query.outcome_nodes())?, ids(query.given_nodes())?);
    base.check_disjoint(&[&y, &given])?;
    let wanted: VarSet = y.union(&given).copied().collect();
    if let Some(&v) = wanted.iter().find(|&&v| base.kind(v) != NodeKind::Observed) {
        return Err(GraphError::MalformedDecl { line: 0, msg: format!("`{}` is not observed", base.name(v)) });
    }
    let markov = base.bidirected_edges().is_empty() && base.ids().all(|v| base.kind(v) == NodeKind::Observed);
    let relevant: VarSet = base.ancestors(&wanted).into_iter().filter(|&v| base.kind(v) == NodeKind::Observed).collect();
    let order: Vec<NodeId> = base.topological_order().into_iter().filter(|v| relevant.contains(v)).collect();
    let mut factors = Vec::new();
    let (mut tgt_vars, mut src_vars) = (VarSet::new(), VarSet::new());
    for (i, &v) in order.iter().enumerate() {
        let cond: VarSet = if markov { base.parents(v).clone().into_iter().collect() } else { order[..i].iter().copied().collect() };
        let slots = |s: &VarSet| s.iter().map(|&u| Slot::free(base.name(u))).collect::<Vec<_>>();
        let term = ProbTerm::new(vec![Slot::free(base.name(v))], slots(&cond), Vec::new());
        let certificate = invariant_term(sd, &term)?;
        let (pop, vars) = if certificate.separated() { (SOURCE, &mut src_vars) } else { (TARGET, &mut tgt_vars) };
        vars.insert(v);
        vars.extend(cond);
        factors.push(AdaptedFactor { term: term.with_pop(pop), certificate });
    }
    let joint = ProbExpr::product(factors.iter().map(|f| ProbExpr::Term(f.term.clone())).collect());
    let over = |keep: &VarSet| -> Vec<Sym> { order.iter().filter(|v| !keep.contains(v)).map(|&v| Sym::new(base.name(v))).collect() };
    let num = ProbExpr::sum(over(&wanted), joint.clone());
    let answer = if given.is_empty() { num } else { ProbExpr::quotient(num, ProbExpr::sum(over(&given), joint)) };
    let answer = normalize(&answer, &VarOrder::from_diagram(base));
    Ok(AdaptationPlan { factors, answer, target_measurements: base.names_of(&tgt_vars), source_measurements: base.names_of(&src_vars) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_graph;
    use crate::oracle::{random_pair, PopEnv};
    use crate::testutil::assignments;
    use std::collections::BTreeMap;

    fn chain() -> SelectionDiagram {
        SelectionDiagram::new(parse_graph("nodes: X, Y, Z\nX -> Y\nY -> Z\nS1 ~> Y").unwrap().into_diagram()).unwrap()
    }

    #[test]
    fn chain_needs_only_x_and_y_in_target() {
        let sd = chain();
        let p = adapt_factorization(&sd, &ProbTerm::of(&["X"], &["Z"], &[])).unwrap();
        let shown: Vec<String> = p.factors.iter().map(|f| ProbExpr::Term(f.term.clone()).to_string()).collect();
        assert_eq!(shown, vec!["P(x)", "P*(y | x)", "P(z | y)"]);
        assert_eq!(p.target_measurements, vec!["X", "Y"]);
        for seed in 0..20 {
            let (src, tgt) = random_pair::<f64>(&sd, seed);
            let env = PopEnv::new().bind(SOURCE, &src).bind(TARGET, &tgt);
            let joint = tgt.eval_observational(&["X", "Z"]).unwrap();
            let z = tgt.eval_observational(&["Z"]).unwrap();
            for a in assignments(&["X".into(), "Z".into()], &tgt) {
                let truth = joint.get(&a) / z.get(&a[1..]);
                let asg: BTreeMap<_, _> = [(Sym::new("X"), a[0]), (Sym::new("Z"), a[1])].into();
                assert!((env.eval_at(&p.answer, &asg).unwrap() - truth).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn irrelevant_factors_dropped() {
        let p = adapt_factorization(&chain(), &ProbTerm::of(&["X"], &[], &[])).unwrap();
        assert_eq!(p.factors.len(), 1);
        assert!(p.target_measurements.is_empty());
        assert!(adapt_factorization(&chain(), &ProbTerm::of(&["Y"], &[], &["X"])).is_err());
    }
}
