use std::collections::BTreeMap;

use crate::expr::{ProbExpr, Sym};
use crate::graph::CausalDiagram;
use crate::oracle::{random_scm, DiscreteScm, PopEnv};

pub fn g(name: &str) -> CausalDiagram {
    crate::corpus::load(name).unwrap().into_diagram()
}

/// Every assignment of the named binary variables.
pub fn assignments(names: &[String], m: &DiscreteScm<f64>) -> Vec<Vec<u32>> {
    let mut out = vec![Vec::new()];
    for n in names {
        let card = m.card(n).unwrap();
        out = out.into_iter().flat_map(|a| (0..card).map(move |v| [a.clone(), vec![v]].concat())).collect();
    }
    out
}

/// Largest gap between `e` and the oracle's `P(y | do(x), c)` over all
/// assignments, for one model.
pub fn gap(e: &ProbExpr, m: &DiscreteScm<f64>, y: &[&str], x: &[&str], c: &[&str]) -> f64 {
    let env = PopEnv::single(m);
    let names: Vec<String> = x.iter().chain(y).chain(c).map(|s| s.to_string()).collect();
    let mut worst = 0.0f64;
    for a in assignments(&names, m) {
        let (xv, rest) = a.split_at(x.len());
        let dos: Vec<(&str, u32)> = x.iter().copied().zip(xv.iter().copied()).collect();
        let yc: Vec<&str> = y.iter().chain(c).copied().collect();
        let joint = m.eval_interventional(&dos, &yc).unwrap().get(rest);
        let truth = if c.is_empty() { joint } else { joint / m.eval_interventional(&dos, c).unwrap().get(&rest[y.len()..]) };
        let asg: BTreeMap<Sym, u32> = names.iter().map(|n| Sym::new(n.clone())).zip(a.iter().copied()).collect();
        let got = env.eval_at(e, &asg).unwrap_or_else(|err| panic!("{e}: {err}"));
        worst = worst.max((got - truth).abs());
    }
    worst
}

/// `gap` maximized over 20 seeded random models.
pub fn oracle_gap(d: &CausalDiagram, e: &ProbExpr, y: &[&str], x: &[&str], c: &[&str]) -> f64 {
    (0..20).map(|seed| gap(e, &random_scm::<f64>(d, seed), y, x, c)).fold(0.0, f64::max)
}
