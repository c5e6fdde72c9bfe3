//! Causal-effect identification: back-door and front-door shortcuts plus the
//! complete c-component recursion (ID, and IDC for conditional queries).

use std::fmt;

use crate::expr::{normalize, Estimand, ProbExpr, ProbTerm, Slot, Sym, VarOrder};
use crate::graph::{certify, CausalDiagram, GraphError, Mutilation, NodeId, NodeKind, VarSet};

/// The structure at which the recursion failed: `component` is a single
/// c-component of the current subgraph that still contains treatment
/// variables, `subcomponent` the c-component left once they are removed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hedge {
    pub component: Vec<String>,
    pub subcomponent: Vec<String>,
    pub treatment: Vec<String>,
    /// Directed edges among `component`, as `(parent, child)`.
    pub edges: Vec<(String, String)>,
}

impl fmt::Display for Hedge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let edges: Vec<String> = self.edges.iter().map(|(a, b)| format!("{a} -> {b}")).collect();
        write!(
            f,
            "c-component {{{}}} with treatment {{{}}} leaves {{{}}}; edges: {}",
            self.component.join(", "),
            self.treatment.join(", "),
            self.subcomponent.join(", "),
            if edges.is_empty() { "none".to_string() } else { edges.join(", ") }
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum IdentifyResult {
    Identified { estimand: Estimand, trace: Vec<String> },
    NonIdentifiable(Hedge),
}

impl IdentifyResult {
    pub fn estimand(&self) -> Option<&Estimand> {
        match self {
            IdentifyResult::Identified { estimand, .. } => Some(estimand),
            IdentifyResult::NonIdentifiable(_) => None,
        }
    }

    pub fn is_identified(&self) -> bool {
        matches!(self, IdentifyResult::Identified { .. })
    }
}

fn check_observed(d: &CausalDiagram, sets: &[&VarSet]) -> Result<(), GraphError> {
    for s in sets {
        d.check_known(s)?;
        if let Some(&v) = s.iter().find(|&&v| d.kind(v) != NodeKind::Observed) {
            return Err(GraphError::UnknownNode(d.name(v).to_string()));
        }
    }
    d.check_disjoint(sets)
}

fn sep(d: &CausalDiagram, cut_in: &VarSet, cut_out: &VarSet, a: &VarSet, b: &VarSet, c: &VarSet) -> bool {
    certify(d, &Mutilation::new(d, cut_in, cut_out), a, b, c).map(|c| c.separated()).unwrap_or(false)
}

fn syms(d: &CausalDiagram, s: &VarSet) -> Vec<Sym> {
    s.iter().map(|&v| Sym::new(d.name(v))).collect()
}

fn term(d: &CausalDiagram, outcome: &VarSet, given: &VarSet) -> ProbExpr {
    let slots = |s: &VarSet| s.iter().map(|&v| Slot::free(d.name(v))).collect();
    ProbExpr::Term(ProbTerm::new(slots(outcome), slots(given), Vec::new()))
}

/// Subsets of `pool` in canonical order, smallest first, up to `max` members.
pub(crate) fn subsets_upto(pool: &VarSet, max: usize) -> Vec<VarSet> {
    let items: Vec<NodeId> = pool.iter().copied().collect();
    let mut out = vec![VarSet::new()];
    for k in 1..=max.min(items.len()) {
        let mut idx: Vec<usize> = (0..k).collect();
        loop {
            out.push(idx.iter().map(|&i| items[i]).collect());
            let Some(i) = (0..k).rev().find(|&i| idx[i] != i + items.len() - k) else { break };
            idx[i] += 1;
            for j in i + 1..k {
                idx[j] = idx[j - 1] + 1;
            }
        }
    }
    out
}

/// True iff `w` contains no descendant of `x` and blocks every back-door
/// path from `x` to `y`.
pub fn backdoor_admissible(d: &CausalDiagram, x: &VarSet, y: &VarSet, w: &VarSet) -> Result<bool, GraphError> {
    d.check_known(x)?;
    d.check_known(y)?;
    d.check_known(w)?;
    d.check_disjoint(&[x, y, w])?;
    if !d.descendants(x).is_disjoint(w) {
        return Ok(false);
    }
    Ok(sep(d, &VarSet::new(), x, x, y, w))
}

fn backdoor_formula(d: &CausalDiagram, x: &VarSet, y: &VarSet, w: &VarSet) -> ProbExpr {
    let given: VarSet = x.union(w).copied().collect();
    if w.is_empty() {
        return term(d, y, &given);
    }
    ProbExpr::sum(syms(d, w), ProbExpr::product(vec![term(d, y, &given), term(d, w, &VarSet::new())]))
}

/// Smallest admissible set among observed non-descendants of `x`.
pub fn find_backdoor(d: &CausalDiagram, x: &VarSet, y: &VarSet, max: usize) -> Result<Option<VarSet>, GraphError> {
    d.check_known(x)?;
    d.check_known(y)?;
    let desc = d.descendants(x);
    let pool: VarSet = d.observed().into_iter().filter(|v| !desc.contains(v) && !y.contains(v)).collect();
    for w in subsets_upto(&pool, max) {
        if backdoor_admissible(d, x, y, &w)? {
            return Ok(Some(w));
        }
    }
    Ok(None)
}

/// First observed set (canonical order, smallest first) satisfying the
/// front-door conditions for the effect of `x` on `y`.
pub fn find_frontdoor(d: &CausalDiagram, x: &VarSet, y: &VarSet) -> Result<Option<VarSet>, GraphError> {
    d.check_known(x)?;
    d.check_known(y)?;
    d.check_disjoint(&[x, y])?;
    let pool: VarSet = d.observed().into_iter().filter(|v| !x.contains(v) && !y.contains(v)).collect();
    let none = VarSet::new();
    for z in subsets_upto(&pool, pool.len()).into_iter().skip(1) {
        let intercepts = d.cut_outgoing(&z)?.descendants(x).is_disjoint(y);
        if intercepts && sep(d, &none, x, x, &z, &none) && sep(d, &none, &z, &z, y, x) {
            return Ok(Some(z));
        }
    }
    Ok(None)
}

/// `Σ_z P(z|x) Σ_x' P(y|x',z) P(x')` through the first front-door set.
pub fn frontdoor_identify(d: &CausalDiagram, x: &VarSet, y: &VarSet) -> Result<Option<Estimand>, GraphError> {
    let Some(z) = find_frontdoor(d, x, y)? else { return Ok(None) };
    Ok(Some(Estimand::new(normalize(&frontdoor_formula(d, x, y, &z), &VarOrder::from_diagram(d)))))
}

fn frontdoor_formula(d: &CausalDiagram, x: &VarSet, y: &VarSet, z: &VarSet) -> ProbExpr {
    let slots = |s: &VarSet, primes: u8| -> Vec<Slot> { s.iter().map(|&v| Slot::sym(&Sym::primed(d.name(v), primes))).collect() };
    let inner = ProbExpr::sum(
        x.iter().map(|&v| Sym::primed(d.name(v), 1)).collect(),
        ProbExpr::product(vec![
            ProbExpr::Term(ProbTerm::new(slots(y, 0), [slots(x, 1), slots(z, 0)].concat(), Vec::new())),
            ProbExpr::Term(ProbTerm::new(slots(x, 1), Vec::new(), Vec::new())),
        ]),
    );
    ProbExpr::sum(syms(d, z), ProbExpr::product(vec![term(d, z, x), inner]))
}

/// Current distribution in the recursion, over the vertex set in scope.
#[derive(Clone)]
enum Dist {
    /// Marginal of the observed joint.
    Obs,
    Joint(ProbExpr),
}

/// The recursion runs on the latent projection `g`; vertex subsets stand for
/// induced subgraphs.
struct Id<'a> {
    g: &'a CausalDiagram,
    topo: Vec<NodeId>,
    trace: Vec<String>,
}

impl<'a> Id<'a> {
    fn names(&self, s: &VarSet) -> String {
        format!("{{{}}}", self.g.names_of(s).join(", "))
    }

    /// Ancestors of `y` within `vs`, ignoring arrows into `cut`.
    fn ancestors(&self, vs: &VarSet, y: &VarSet, cut: &VarSet) -> VarSet {
        let mut seen: VarSet = y.clone();
        let mut stack: Vec<NodeId> = y.iter().copied().collect();
        while let Some(v) = stack.pop() {
            if cut.contains(&v) {
                continue;
            }
            for &p in self.g.parents(v) {
                if vs.contains(&p) && seen.insert(p) {
                    stack.push(p);
                }
            }
        }
        seen
    }

    fn c_components(&self, s: &VarSet) -> Vec<VarSet> {
        let mut out: Vec<VarSet> = Vec::new();
        let mut left = s.clone();
        while let Some(start) = left.pop_first() {
            let mut comp: VarSet = [start].into();
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &(a, b) in self.g.bidirected_edges() {
                    let other = if a == v { b } else if b == v { a } else { continue };
                    if left.remove(&other) {
                        comp.insert(other);
                        stack.push(other);
                    }
                }
            }
            out.push(comp);
        }
        out
    }

    fn sum(&self, over: &VarSet, body: ProbExpr) -> ProbExpr {
        ProbExpr::sum(syms(self.g, over), body)
    }

    /// `P(v | predecessors of v within vs)` under `dist`.
    fn conditional(&self, dist: &Dist, vs: &VarSet, v: NodeId) -> ProbExpr {
        let pos = self.topo.iter().position(|&u| u == v).expect("vertex in order");
        let pred: VarSet = self.topo[..pos].iter().copied().filter(|u| vs.contains(u)).collect();
        match dist {
            Dist::Obs => term(self.g, &[v].into(), &pred),
            Dist::Joint(e) => {
                let after: VarSet = vs.iter().copied().filter(|u| *u != v && !pred.contains(u)).collect();
                let with_v: VarSet = after.iter().copied().chain([v]).collect();
                ProbExpr::quotient(self.sum(&after, e.clone()), self.sum(&with_v, e.clone()))
            }
        }
    }

    fn marginal(&self, dist: &Dist, vs: &VarSet, keep: &VarSet) -> Dist {
        match dist {
            Dist::Obs => Dist::Obs,
            Dist::Joint(e) => Dist::Joint(self.sum(&vs.difference(keep).copied().collect(), e.clone())),
        }
    }

    fn run(&mut self, y: &VarSet, x: &VarSet, dist: &Dist, vs: &VarSet) -> Result<ProbExpr, Hedge> {
        let g = self.g;
        if x.is_empty() {
            self.trace.push(format!("no treatment left: marginal over {}", self.names(y)));
            return Ok(match dist {
                Dist::Obs => term(g, y, &VarSet::new()),
                Dist::Joint(e) => self.sum(&vs.difference(y).copied().collect(), e.clone()),
            });
        }
        let an = self.ancestors(vs, y, &VarSet::new());
        if an != *vs {
            self.trace.push(format!("restrict to ancestors {} of {}", self.names(&an), self.names(y)));
            let x2: VarSet = x.intersection(&an).copied().collect();
            let d2 = self.marginal(dist, vs, &an);
            return self.run(y, &x2, &d2, &an);
        }
        let an_cut = self.ancestors(vs, y, x);
        let w: VarSet = vs.iter().copied().filter(|v| !x.contains(v) && !an_cut.contains(v)).collect();
        if !w.is_empty() {
            self.trace.push(format!("add do-irrelevant {} to the treatment", self.names(&w)));
            let x2: VarSet = x.union(&w).copied().collect();
            // the result does not depend on the added actions; pin them
            let mut e = self.run(y, &x2, dist, vs)?;
            for &v in &w {
                e = e.bind(&Sym::new(g.name(v)), 0);
            }
            return Ok(e);
        }
        let rest: VarSet = vs.difference(x).copied().collect();
        let comps = self.c_components(&rest);
        if comps.len() > 1 {
            self.trace.push(format!(
                "factor over c-components {}",
                comps.iter().map(|c| self.names(c)).collect::<Vec<_>>().join(" ")
            ));
            let mut fs = Vec::new();
            for s in &comps {
                let x2: VarSet = vs.difference(s).copied().collect();
                fs.push(self.run(s, &x2, dist, vs)?);
            }
            let over: VarSet = rest.difference(y).copied().collect();
            return Ok(self.sum(&over, ProbExpr::product(fs)));
        }
        let s = comps.into_iter().next().expect("nonempty outcome");
        let whole = self.c_components(vs);
        if whole.len() == 1 {
            let mut edges = Vec::new();
            for &v in vs {
                for &c in g.children(v) {
                    if vs.contains(&c) {
                        edges.push((g.name(v).to_string(), g.name(c).to_string()));
                    }
                }
            }
            return Err(Hedge {
                component: g.names_of(vs),
                subcomponent: g.names_of(&s),
                treatment: g.names_of(x),
                edges,
            });
        }
        if whole.contains(&s) {
            self.trace.push(format!("{} is a c-component: product of its factors", self.names(&s)));
            let fs: Vec<ProbExpr> = self.topo.iter().filter(|v| s.contains(v)).map(|&v| self.conditional(dist, vs, v)).collect();
            let over: VarSet = s.difference(y).copied().collect();
            return Ok(self.sum(&over, ProbExpr::product(fs)));
        }
        let big = whole.into_iter().find(|c| s.is_subset(c)).expect("c-components nest");
        self.trace.push(format!("recurse into c-component {}", self.names(&big)));
        let fs: Vec<ProbExpr> = self.topo.iter().filter(|v| big.contains(v)).map(|&v| self.conditional(dist, vs, v)).collect();
        let x2: VarSet = x.intersection(&big).copied().collect();
        self.run(y, &x2, &Dist::Joint(ProbExpr::product(fs)), &big)
    }

    fn conditional_query(&mut self, y: &VarSet, x: &VarSet, z: &VarSet) -> Result<ProbExpr, Hedge> {
        for &zi in z {
            let zi_set: VarSet = [zi].into();
            let others: VarSet = x.iter().chain(z.iter()).copied().filter(|&v| v != zi).collect();
            if sep(self.g, x, &zi_set, y, &zi_set, &others) {
                self.trace.push(format!("observation {} becomes an action", self.g.name(zi)));
                let x2: VarSet = x.union(&zi_set).copied().collect();
                let z2: VarSet = z.difference(&zi_set).copied().collect();
                return self.conditional_query(y, &x2, &z2);
            }
        }
        let all: VarSet = self.g.ids().collect();
        let yz: VarSet = y.union(z).copied().collect();
        let joint = self.run(&yz, x, &Dist::Obs, &all)?;
        if z.is_empty() {
            return Ok(joint);
        }
        self.trace.push(format!("divide by the marginal over {}", self.names(z)));
        Ok(ProbExpr::quotient(joint.clone(), self.sum(y, joint)))
    }
}

/// Drops conditioning variables that are d-separated from the outcome given
/// the rest of the conditioning set.
pub(crate) fn prune_conditions(d: &CausalDiagram, e: &ProbExpr) -> ProbExpr {
    e.map_terms(&mut |t| {
        if !t.is_do_free() {
            return ProbExpr::Term(t.clone());
        }
        let ids = |s: &[Slot]| -> Option<VarSet> { s.iter().map(|x| d.try_id(&x.node)).collect() };
        let (Some(out), Some(_)) = (ids(&t.outcome), ids(&t.given)) else { return ProbExpr::Term(t.clone()) };
        let mut given = t.given.clone();
        let mut i = 0;
        while i < given.len() {
            let gi: VarSet = [d.try_id(&given[i].node).expect("checked")].into();
            let rest: VarSet = given.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, s)| d.try_id(&s.node).expect("checked")).collect();
            if sep(d, &VarSet::new(), &VarSet::new(), &out, &gi, &rest) {
                given.remove(i);
                i = 0;
            } else {
                i += 1;
            }
        }
        ProbExpr::Term(ProbTerm { given, ..t.clone() })
    })
}

fn finish(d: &CausalDiagram, e: &ProbExpr) -> ProbExpr {
    let order = VarOrder::from_diagram(d);
    let mut cur = normalize(e, &order);
    loop {
        let next = normalize(&prune_conditions(d, &cur), &order);
        if next == cur {
            return cur.unshadow();
        }
        cur = next;
    }
}

/// `P(y | do(x), context)` as a do-free estimand, or the structure that
/// blocks identification.
pub fn identify_effect(d: &CausalDiagram, y: &VarSet, x: &VarSet, context: &VarSet) -> Result<IdentifyResult, GraphError> {
    check_observed(d, &[y, x, context])?;
    if y.is_empty() {
        return Err(GraphError::UnknownNode("<empty outcome>".into()));
    }
    let keep: VarSet = d.ids().filter(|&v| d.kind(v) != NodeKind::Selection).collect();
    let base = d.induced(&keep);
    let to_base = |s: &VarSet| -> VarSet { s.iter().map(|&v| base.id(d.name(v)).expect("kept")).collect() };
    let (y, x, context) = (to_base(y), to_base(x), to_base(context));
    let done = |expr: ProbExpr, trace: Vec<String>| {
        let expr = finish(&base, &expr);
        Ok(IdentifyResult::Identified { estimand: Estimand::new(expr), trace })
    };

    if context.is_empty() {
        if let Some(w) = find_backdoor(&base, &x, &y, 4)? {
            let trace = vec![format!("back-door adjustment for {{{}}}", base.names_of(&w).join(", "))];
            return done(backdoor_formula(&base, &x, &y, &w), trace);
        }
        if let Some(z) = find_frontdoor(&base, &x, &y)? {
            let trace = vec![format!("front-door through {{{}}}", base.names_of(&z).join(", "))];
            return done(frontdoor_formula(&base, &x, &y, &z), trace);
        }
    }

    let g = base.project_latents();
    let to_g = |s: &VarSet| -> VarSet { s.iter().map(|&v| g.id(base.name(v)).expect("observed")).collect() };
    let mut id = Id { g: &g, topo: g.topological_order(), trace: Vec::new() };
    match id.conditional_query(&to_g(&y), &to_g(&x), &to_g(&context)) {
        Ok(expr) => {
            let trace = std::mem::take(&mut id.trace);
            done(expr, trace)
        }
        Err(h) => Ok(IdentifyResult::NonIdentifiable(h)),
    }
}

/// `identify_effect` skipping the shortcuts, so the recursion alone decides.
pub fn identify_by_recursion(d: &CausalDiagram, y: &VarSet, x: &VarSet, context: &VarSet) -> Result<IdentifyResult, GraphError> {
    check_observed(d, &[y, x, context])?;
    let keep: VarSet = d.ids().filter(|&v| d.kind(v) != NodeKind::Selection).collect();
    let base = d.induced(&keep);
    let g = base.project_latents();
    let to_g = |s: &VarSet| -> VarSet { s.iter().map(|&v| g.id(d.name(v)).expect("observed")).collect() };
    let mut id = Id { g: &g, topo: g.topological_order(), trace: Vec::new() };
    match id.conditional_query(&to_g(y), &to_g(x), &to_g(context)) {
        Ok(expr) => Ok(IdentifyResult::Identified { estimand: Estimand::new(finish(&base, &expr)), trace: id.trace }),
        Err(h) => Ok(IdentifyResult::NonIdentifiable(h)),
    }
}
