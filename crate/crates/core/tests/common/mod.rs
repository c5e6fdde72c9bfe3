#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use docalc::dsl::parse_graph;
use docalc::expr::{ProbExpr, Sym};
use docalc::graph::{CausalDiagram, DiagramBuilder, NodeId, NodeKind, VarSet};
use docalc::oracle::{random_scm, PopEnv};
use docalc::Scm;

pub const FIXTURE_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures");

pub fn fixture(name: &str) -> CausalDiagram {
    docalc::corpus::load(name).unwrap_or_else(|| panic!("no fixture {name}")).into_diagram()
}

pub fn graph(src: &str) -> CausalDiagram {
    parse_graph(src).unwrap().into_diagram()
}

/// Diagram over `V0..V{n-1}` with the given arcs, indices as node ids.
pub fn build(n: usize, directed: &[(usize, usize)], bidirected: &[(usize, usize)]) -> CausalDiagram {
    let mut b = DiagramBuilder::new();
    for i in 0..n {
        b.node(&format!("V{i}"), NodeKind::Observed, 0).unwrap();
    }
    for &(a, c) in directed {
        b.edge(&format!("V{a}"), &format!("V{c}"), 0).unwrap();
    }
    for &(a, c) in bidirected {
        b.bidirected(&format!("V{a}"), &format!("V{c}"), 0).unwrap();
    }
    b.build().unwrap()
}

pub fn ids(v: &[usize]) -> VarSet {
    v.iter().map(|&i| NodeId(i)).collect()
}

/// d-separation by enumerating every simple path of the mixed graph and
/// testing each for activity. Bidirected arcs carry arrowheads at both ends.
pub fn brute_dsep(d: &CausalDiagram, a: &VarSet, b: &VarSet, c: &VarSet) -> bool {
    let n = d.len();
    // adjacency: (neighbour, arrowhead at me, arrowhead at neighbour)
    let mut adj: Vec<Vec<(usize, bool, bool)>> = vec![Vec::new(); n];
    for (p, ch) in d.directed_edges() {
        adj[p.0].push((ch.0, false, true));
        adj[ch.0].push((p.0, true, false));
    }
    for &(x, y) in d.bidirected_edges() {
        adj[x.0].push((y.0, true, true));
        adj[y.0].push((x.0, true, true));
    }
    // descendants by directed arcs, reflexive
    let mut desc: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n];
    for v in 0..n {
        let mut stack = vec![v];
        while let Some(u) = stack.pop() {
            if desc[v].insert(u) {
                stack.extend(d.children(NodeId(u)).iter().map(|w| w.0));
            }
        }
    }
    let in_c = |v: usize| c.contains(&NodeId(v));
    fn walk(
        v: usize,
        into_v: bool,
        path: &mut Vec<usize>,
        adj: &[Vec<(usize, bool, bool)>],
        ok_mid: &dyn Fn(usize, bool, bool) -> bool,
        target: &dyn Fn(usize) -> bool,
    ) -> bool {
        for &(w, head_at_v, head_at_w) in &adj[v] {
            if path.contains(&w) {
                continue;
            }
            if path.len() > 1 && !ok_mid(v, into_v, head_at_v) {
                continue;
            }
            if target(w) {
                return true;
            }
            path.push(w);
            let found = walk(w, head_at_w, path, adj, ok_mid, target);
            path.pop();
            if found {
                return true;
            }
        }
        false
    }
    let ok_mid = |v: usize, arrived_head: bool, leaving_head: bool| {
        if arrived_head && leaving_head {
            desc[v].iter().any(|&u| in_c(u))
        } else {
            !in_c(v)
        }
    };
    let target = |w: usize| b.contains(&NodeId(w));
    for &s in a {
        let mut path = vec![s.0];
        // a first step from `s` has no middle node to test
        for &(w, _, head_at_w) in &adj[s.0] {
            if target(w) {
                return false;
            }
            path.push(w);
            let hit = walk(w, head_at_w, &mut path, &adj, &ok_mid, &target);
            path.pop();
            if hit {
                return false;
            }
        }
    }
    true
}

/// Every joint value of the given symbols (all binary in the generated models).
pub fn assignments_of(syms: &[Sym], m: &Scm) -> Vec<BTreeMap<Sym, u32>> {
    let mut out = vec![BTreeMap::new()];
    for s in syms {
        let card = m.card(&s.node).unwrap();
        out = out
            .into_iter()
            .flat_map(|a| {
                (0..card).map(move |v| {
                    let mut a = a.clone();
                    a.insert(s.clone(), v);
                    a
                })
            })
            .collect();
    }
    out
}

/// Largest difference between `a` and `b` over all values of their free
/// symbols, with every population tag bound to `m`.
pub fn value_gap(a: &ProbExpr, b: &ProbExpr, env: &PopEnv<'_, f64>, m: &Scm) -> f64 {
    let syms: Vec<Sym> = a.free_syms().union(&b.free_syms()).cloned().collect();
    assignments_of(&syms, m)
        .iter()
        .map(|asg| (env.eval_at(a, asg).unwrap() - env.eval_at(b, asg).unwrap()).abs())
        .fold(0.0, f64::max)
}

pub fn models(d: &CausalDiagram, n: u64) -> Vec<Scm> {
    (0..n).map(|s| random_scm::<f64>(d, s)).collect()
}

use docalc::docalculus::{rule_applicable, RuleBinding, RuleId, Way};
use docalc::expr::ProbTerm;

/// Outcome of checking rule instances against oracle models.
#[derive(Debug, Default)]
pub struct Sweep {
    pub instances: usize,
    pub separated: usize,
    pub max_gap: f64,
    pub violations: Vec<String>,
}

/// The diagram with selection nodes removed.
pub fn without_selection(d: &CausalDiagram) -> CausalDiagram {
    let keep: VarSet = d.ids().filter(|&v| d.kind(v) != NodeKind::Selection).collect();
    d.induced(&keep)
}

/// Both sides of a rule as terms over the bound variables.
pub fn rule_sides(d: &CausalDiagram, rule: RuleId, b: &RuleBinding) -> (ProbTerm, ProbTerm) {
    let n = |s: &VarSet| d.names_of(s);
    let (x, y, z, w) = (n(&b.x), n(&b.y), n(&b.z), n(&b.w));
    fn r(v: &[String]) -> Vec<&str> {
        v.iter().map(String::as_str).collect()
    }
    let cat = |a: &[String], b: &[String]| [a, b].concat();
    match rule {
        RuleId::R1 => (ProbTerm::of(&r(&y), &r(&cat(&z, &w)), &r(&x)), ProbTerm::of(&r(&y), &r(&w), &r(&x))),
        RuleId::R2 => (ProbTerm::of(&r(&y), &r(&w), &r(&cat(&x, &z))), ProbTerm::of(&r(&y), &r(&cat(&z, &w)), &r(&x))),
        RuleId::R3 => (ProbTerm::of(&r(&y), &r(&w), &r(&cat(&x, &z))), ProbTerm::of(&r(&y), &r(&w), &r(&x))),
    }
}

/// Every assignment of observed nodes to the roles X, Y, Z, W or none with
/// at most `cap` nodes per role and non-empty Y and Z.
pub fn bindings(d: &CausalDiagram, cap: usize) -> Vec<RuleBinding> {
    let obs: Vec<NodeId> = d.observed().into_iter().collect();
    let mut out = Vec::new();
    let total = 5usize.pow(obs.len() as u32);
    for code in 0..total {
        let mut sets: [VarSet; 4] = Default::default();
        let mut c = code;
        for &v in &obs {
            let role = c % 5;
            c /= 5;
            if role < 4 {
                sets[role].insert(v);
            }
        }
        if sets.iter().any(|s| s.len() > cap) || sets[1].is_empty() || sets[2].is_empty() {
            continue;
        }
        let [x, y, z, w] = sets;
        out.push(RuleBinding::new(x, y, z, w, Way::Forward));
    }
    out
}

/// Checks every separated instance on `seeds` oracle models per diagram.
pub fn rule_sweep(names: &[&str], cap: usize, seeds: u64) -> Sweep {
    let mut sweep = Sweep::default();
    for name in names {
        let d = without_selection(&fixture(name));
        if d.observed().len() > 6 {
            continue;
        }
        let ms = models(&d, seeds);
        let envs: Vec<PopEnv<'_, f64>> = ms.iter().map(PopEnv::single).collect();
        for b in bindings(&d, cap) {
            for rule in [RuleId::R1, RuleId::R2, RuleId::R3] {
                sweep.instances += 1;
                let cert = rule_applicable(&d, rule, &b).unwrap();
                if !cert.separated() {
                    continue;
                }
                sweep.separated += 1;
                let (lhs, rhs) = rule_sides(&d, rule, &b);
                let (lhs, rhs) = (ProbExpr::Term(lhs), ProbExpr::Term(rhs));
                for (env, m) in envs.iter().zip(&ms) {
                    let gap = value_gap(&lhs, &rhs, env, m);
                    sweep.max_gap = sweep.max_gap.max(gap);
                    if gap > 1e-9 {
                        sweep.violations.push(format!("{name} {rule}: {lhs} = {rhs} off by {gap:e}"));
                        break;
                    }
                }
            }
        }
    }
    sweep
}

pub const ALL_FIXTURES: [&str; 16] = [
    "fig1a", "fig1b", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7a", "fig7b", "fig7b_ux", "fig7c", "fig8", "bow", "bow_m", "chain",
    "collider",
];
