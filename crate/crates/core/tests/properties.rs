//! Randomized invariants over generated diagrams, expressions and models.

mod common;

use common::*;
use docalc::expr::{normalize, parse_expr, render, Format, ProbExpr, ProbTerm, Slot, Sym, VarOrder};
use docalc::graph::{d_separated, CausalDiagram, Direction, NodeId, VarSet};
use docalc::oracle::{random_scm, PopEnv};
use proptest::prelude::*;

/// A diagram over up to six nodes: arcs go from lower to higher index.
fn diagram() -> impl Strategy<Value = CausalDiagram> {
    (2usize..=6).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
        let k = pairs.len();
        (Just(n), Just(pairs), prop::collection::vec(0u8..6, k)).prop_map(|(n, pairs, codes)| {
            let directed: Vec<_> = pairs.iter().zip(&codes).filter(|(_, &c)| c < 2).map(|(p, _)| *p).collect();
            let bidirected: Vec<_> = pairs.iter().zip(&codes).filter(|(_, &c)| c == 2).map(|(p, _)| *p).collect();
            build(n, &directed, &bidirected)
        })
    })
}

/// Three disjoint node sets drawn from a diagram's nodes by labels 0-3.
fn split(d: &CausalDiagram, labels: &[u8]) -> (VarSet, VarSet, VarSet) {
    let mut out = (VarSet::new(), VarSet::new(), VarSet::new());
    for v in 0..d.len() {
        match labels[v % labels.len()] {
            0 => out.0.insert(NodeId(v)),
            1 => out.1.insert(NodeId(v)),
            2 => out.2.insert(NodeId(v)),
            _ => false,
        };
    }
    out
}

fn labels() -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..4, 6)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn cuts_idempotent_and_commuting(d in diagram(), l in labels()) {
        let (x, z, _) = split(&d, &l);
        let once = d.cut_incoming(&x).unwrap();
        prop_assert_eq!(once.cut_incoming(&x).unwrap(), once.clone());
        let out = d.cut_outgoing(&z).unwrap();
        prop_assert_eq!(out.cut_outgoing(&z).unwrap(), out.clone());
        prop_assert_eq!(once.cut_outgoing(&z).unwrap(), out.cut_incoming(&x).unwrap());
    }

    #[test]
    fn dsep_symmetric_and_matches_path_enumeration(d in diagram(), l in labels()) {
        let (a, b, c) = split(&d, &l);
        let ab = d_separated(&d, &a, &b, &c).unwrap().separated();
        prop_assert_eq!(ab, d_separated(&d, &b, &a, &c).unwrap().separated());
        prop_assert_eq!(ab, brute_dsep(&d, &a, &b, &c));
    }

    #[test]
    fn ancestors_and_descendants_are_converse(d in diagram()) {
        for a in 0..d.len() {
            for b in 0..d.len() {
                let up = d.relatives(&[NodeId(b)].into(), Direction::Ancestors, true).unwrap().contains(&NodeId(a));
                let down = d.relatives(&[NodeId(a)].into(), Direction::Descendants, true).unwrap().contains(&NodeId(b));
                prop_assert_eq!(up, down);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn separation_implies_independence(d in diagram(), l in labels(), seed in 0u64..1000) {
        let (a, b, c) = split(&d, &l);
        prop_assume!(!a.is_empty() && !b.is_empty());
        prop_assume!(d_separated(&d, &a, &b, &c).unwrap().separated());
        let m = random_scm::<f64>(&d, seed);
        let names = |s: &VarSet| d.names_of(s);
        let (an, bn, cn) = (names(&a), names(&b), names(&c));
        let all: Vec<&str> = an.iter().chain(&bn).chain(&cn).map(String::as_str).collect();
        let joint = m.eval_observational(&all).unwrap();
        let pick = |keep: &[&String]| joint.marginal(&keep.iter().map(|s| s.as_str()).collect::<Vec<_>>());
        let ac: Vec<&String> = an.iter().chain(&cn).collect();
        let bc: Vec<&String> = bn.iter().chain(&cn).collect();
        let cc: Vec<&String> = cn.iter().collect();
        let (pac, pbc, pc) = (pick(&ac), pick(&bc), pick(&cc));
        for (k, p) in &joint.table {
            let (ka, rest) = k.split_at(an.len());
            let (kb, kc) = rest.split_at(bn.len());
            let lhs = p * pc.get(kc);
            let rhs = pac.get(&[ka, kc].concat()) * pbc.get(&[kb, kc].concat());
            prop_assert!((lhs - rhs).abs() <= 1e-9, "{} vs {}", lhs, rhs);
        }
    }
}

const VARS: [&str; 4] = ["A", "B", "C", "D"];

fn chain_model_graph() -> CausalDiagram {
    graph("nodes: A, B, C, D\nA -> B\nB -> C\nA -> C\nC -> D\nB <-> D")
}

/// A term over distinct variables; outcome, conditions and actions are
/// disjoint and the outcome is never empty.
fn term() -> impl Strategy<Value = ProbTerm> {
    (prop::collection::vec((0u8..4, prop::option::weighted(0.25, 0u32..2)), 4), prop::bool::ANY).prop_map(|(roles, tgt)| {
        let mut t = ProbTerm::new(Vec::new(), Vec::new(), Vec::new());
        for (i, (r, v)) in roles.into_iter().enumerate() {
            let s = match v {
                None => Slot::free(VARS[i]),
                Some(v) => Slot::fixed(VARS[i], v),
            };
            match r {
                0 => t.outcome.push(s),
                1 => t.given.push(s),
                2 => t.dos.push(s),
                _ => {}
            }
        }
        if t.outcome.is_empty() {
            t.given.retain(|s| s.node != "D");
            t.dos.retain(|s| s.node != "D");
            t.outcome.push(Slot::free("D"));
        }
        if tgt { t.with_pop("tgt") } else { t }
    })
}

fn expr() -> impl Strategy<Value = ProbExpr> {
    let leaf = prop_oneof![8 => term().prop_map(ProbExpr::Term), 1 => (1i64..3).prop_map(ProbExpr::Const)];
    leaf.prop_recursive(3, 16, 3, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 2..4).prop_map(ProbExpr::Product),
            (prop::collection::btree_set(0usize..4, 1..3), inner.clone())
                .prop_map(|(vs, b)| ProbExpr::sum(vs.into_iter().map(|i| Sym::new(VARS[i])).collect(), b)),
            // denominators are single terms, hence strictly positive
            (inner.clone(), term()).prop_map(|(a, t)| ProbExpr::quotient(a, ProbExpr::Term(t))),
            (inner.clone(), inner).prop_map(|(a, b)| ProbExpr::difference(a, b)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn normalize_preserves_value(e in expr(), seed in 0u64..50) {
        let d = chain_model_graph();
        let m = random_scm::<f64>(&d, seed);
        let env = PopEnv::single(&m).bind("tgt", &m);
        let n = normalize(&e, &VarOrder::from_diagram(&d));
        let gap = value_gap(&e, &n, &env, &m);
        prop_assert!(gap <= 1e-12, "{} vs {}: {}", e, n, gap);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn structured_render_round_trips(e in expr()) {
        let s = render(&e, Format::Structured);
        prop_assert_eq!(parse_expr(&s).unwrap(), e);
    }
}

#[test]
fn empty_intervention_is_observation() {
    for name in ["fig1b", "fig2", "fig4"] {
        let d = fixture(name);
        for m in models(&d, 5) {
            let names = m.observed_names();
            let v: Vec<&str> = names.iter().map(String::as_str).collect();
            assert_eq!(m.eval_interventional(&[], &v).unwrap(), m.eval_observational(&v).unwrap());
        }
    }
}

#[test]
fn truncated_factorization_on_markovian_models() {
    let d = graph("nodes: A, B, C, D\nA -> B\nA -> C\nB -> D\nC -> D");
    for m in models(&d, 10) {
        let obs = m.eval_observational(&VARS).unwrap();
        let cond = |v: &str, pa: &[&str], key: &[u32]| -> f64 {
            let vars: Vec<&str> = std::iter::once(v).chain(pa.iter().copied()).collect();
            let j = obs.marginal(&vars).get(key);
            if pa.is_empty() { j } else { j / obs.marginal(pa).get(&key[1..]) }
        };
        for b in 0..2 {
            let post = m.eval_interventional(&[("B", b)], &VARS).unwrap();
            for (k, p) in &post.table {
                let (a, bb, c, dd) = (k[0], k[1], k[2], k[3]);
                let want = if bb == b { cond("A", &[], &[a]) * cond("C", &["A"], &[c, a]) * cond("D", &["B", "C"], &[dd, bb, c]) } else { 0.0 };
                assert!((p - want).abs() <= 1e-12, "{k:?}: {p} vs {want}");
            }
        }
    }
}

#[test]
fn distributions_are_normalized() {
    for name in ["fig2", "fig5", "fig6", "bow"] {
        let d = fixture(name);
        for m in models(&d, 10) {
            let names = m.observed_names();
            let v: Vec<&str> = names.iter().map(String::as_str).collect();
            assert!((m.eval_observational(&v).unwrap().total() - 1.0).abs() <= 1e-9);
            assert!((m.eval_interventional(&[(v[0], 1)], &v[1..]).unwrap().total() - 1.0).abs() <= 1e-9);
        }
    }
}
