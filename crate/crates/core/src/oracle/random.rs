use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::DiscreteScm;
use crate::graph::{CausalDiagram, NodeId, NodeKind, VarSet};
use crate::scalar::Prob;
use crate::transport::SelectionDiagram;

/// Weights of a point drawn from the flat Dirichlet, quantized to integers so
/// that float and exact models built from one seed agree.
fn simplex<T: Prob>(rng: &mut ChaCha8Rng, k: usize) -> Vec<T> {
    let w: Vec<u64> = (0..k).map(|_| (-(1.0 - rng.gen::<f64>()).ln() * 1e6).ceil().max(1.0) as u64).collect();
    let total: u64 = w.iter().sum();
    w.into_iter().map(|x| T::ratio(x, total)).collect()
}

/// A random mechanism in which every value is reachable from every parent
/// configuration, so all observed joints are strictly positive.
fn mechanism<T: Prob>(rng: &mut ChaCha8Rng, card: u32, rows: usize, latent_root: bool) -> (Vec<T>, Vec<u32>) {
    if latent_root {
        return (simplex(rng, card as usize), (0..card).collect());
    }
    let ucard = card as usize + 2;
    let mut table = Vec::with_capacity(rows * ucard);
    for _ in 0..rows {
        let mut row: Vec<u32> = (0..card).collect();
        row.extend((0..2).map(|_| rng.gen_range(0..card)));
        row.shuffle(rng);
        table.extend(row);
    }
    (simplex(rng, ucard), table)
}

fn strip_selection(d: &CausalDiagram) -> CausalDiagram {
    let canon = d.latent_canonicalize();
    let keep: VarSet = canon.ids().filter(|&v| canon.kind(v) != NodeKind::Selection).collect();
    canon.induced(&keep)
}

/// Binary model compatible with `d`, deterministic in `seed`.
pub fn random_scm<T: Prob>(d: &CausalDiagram, seed: u64) -> DiscreteScm<T> {
    random_scm_with(d, seed, &BTreeMap::new())
}

/// As `random_scm`, with per-node cardinalities (default 2).
pub fn random_scm_with<T: Prob>(d: &CausalDiagram, seed: u64, cards: &BTreeMap<String, u32>) -> DiscreteScm<T> {
    let g = strip_selection(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let card: Vec<u32> = g.ids().map(|v| cards.get(g.name(v)).copied().unwrap_or(2).max(2)).collect();
    let mut exo = Vec::with_capacity(g.len());
    let mut table = Vec::with_capacity(g.len());
    for v in g.ids() {
        let rows = g.parents(v).iter().map(|p| card[p.0] as usize).product();
        let latent_root = g.kind(v) == NodeKind::Latent && g.parents(v).is_empty();
        let (e, t) = mechanism(&mut rng, card[v.0], rows, latent_root);
        exo.push(e);
        table.push(t);
    }
    DiscreteScm::from_parts(g, card, exo, table).expect("generated model is valid")
}

/// `(source, target)` models that differ exactly at the mechanisms the
/// selection nodes point at.
pub fn random_pair<T: Prob>(sd: &SelectionDiagram, seed: u64) -> (DiscreteScm<T>, DiscreteScm<T>) {
    let target: DiscreteScm<T> = random_scm(sd.base(), seed);
    let mut source = target.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    for (_, name) in sd.selection_edges() {
        let v: NodeId = target.diagram().id(&name).expect("target variable is in the base");
        let rows = target.diagram().parents(v).iter().map(|p| target.cards()[p.0] as usize).product();
        let latent_root = target.diagram().kind(v) == NodeKind::Latent && target.diagram().parents(v).is_empty();
        loop {
            let (e, t) = mechanism(&mut rng, target.cards()[v.0], rows, latent_root);
            if e != target.exo(v) || t != target.table(v) {
                source.set_mechanism(v, e, t);
                break;
            }
        }
    }
    (source, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_graph;
    use crate::graph::d_separated;
    use num_rational::BigRational;

    #[test]
    fn deterministic_in_seed() {
        let d = parse_graph("nodes: X, M, Y\nX -> M\nM -> Y\nX <-> Y").unwrap().into_diagram();
        assert_eq!(random_scm::<f64>(&d, 7), random_scm::<f64>(&d, 7));
        assert_ne!(random_scm::<f64>(&d, 7), random_scm::<f64>(&d, 8));
    }

    #[test]
    fn float_and_exact_agree() {
        let d = parse_graph("nodes: X, Y\nX -> Y\nX <-> Y").unwrap().into_diagram();
        let a = random_scm::<f64>(&d, 4).eval_observational(&["X", "Y"]).unwrap();
        let b = random_scm::<BigRational>(&d, 4).eval_observational(&["X", "Y"]).unwrap();
        for (k, p) in &a.table {
            assert!((p - b.get(k).to_f64()).abs() < 1e-14);
        }
        assert_eq!(b.total(), BigRational::ratio(1, 1));
    }

    #[test]
    fn joints_are_positive() {
        let d = parse_graph("nodes: A, B, C\nA -> B\nB -> C\nA <-> C").unwrap().into_diagram();
        let m = random_scm_with::<f64>(&d, 2, &[("B".to_string(), 3)].into());
        let j = m.eval_observational(&["A", "B", "C"]).unwrap();
        assert_eq!(j.table.len(), 12);
        assert!(j.table.values().all(|&p| p > 0.0));
    }

    #[test]
    fn independences_follow_dsep() {
        // every d-separation of a collider graph shows up numerically
        let d = parse_graph("nodes: X, Z, Y\nX -> Z\nY -> Z").unwrap().into_diagram();
        let (x, y) = (d.set(&["X"]).unwrap(), d.set(&["Y"]).unwrap());
        assert!(d_separated(&d, &x, &y, &VarSet::new()).unwrap().separated());
        for seed in 0..5 {
            let m = random_scm::<BigRational>(&d, seed);
            let j = m.eval_observational(&["X", "Y"]).unwrap();
            let px = j.marginal(&["X"]);
            let py = j.marginal(&["Y"]);
            for a in 0..2 {
                for b in 0..2 {
                    assert_eq!(j.get(&[a, b]), px.get(&[a]) * py.get(&[b]));
                }
            }
        }
    }

    #[test]
    fn bow_sweep_finds_confounding() {
        let d = parse_graph("nodes: X, Y\nX -> Y\nX <-> Y").unwrap().into_diagram();
        let confounded = (0..20).any(|seed| {
            let m = random_scm::<f64>(&d, seed);
            let doit = m.eval_interventional(&[("X", 1)], &["Y"]).unwrap().get(&[1]);
            let j = m.eval_observational(&["X", "Y"]).unwrap();
            let cond = j.get(&[1, 1]) / j.marginal(&["X"]).get(&[1]);
            (doit - cond).abs() > 1e-6
        });
        assert!(confounded);
    }

    #[test]
    fn pairs_differ_only_at_selected_mechanisms() {
        let sd = parse_graph("nodes: Z, X, Y\nZ -> X\nZ -> Y\nX -> Y\nS ~> Z").unwrap().into_selection();
        let (src, tgt) = random_pair::<f64>(&sd, 11);
        let z = tgt.diagram().id("Z").unwrap();
        for v in tgt.diagram().ids() {
            let same = src.exo(v) == tgt.exo(v) && src.table(v) == tgt.table(v);
            assert_eq!(same, v != z, "{}", tgt.diagram().name(v));
        }
    }
}
