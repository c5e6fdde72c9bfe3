//! Search for two models that agree on the observed joint but disagree on a
//! query.
//!
//! Models are built in response-function form: each confounded component C
//! gets one latent whose values enumerate the joint response functions of
//! C's members. The observed joint is linear in that latent's distribution
//! q_C, so moving q_C along the null space of the observation map keeps the
//! joint fixed exactly; the search looks for a direction that moves the query.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{eval_estimand, DiscreteScm, EvalResult, PopEnv};
use crate::expr::ProbExpr;
use crate::graph::{CausalDiagram, DiagramBuilder, NodeId, NodeKind, VarSet};

#[derive(Debug, Clone, Copy)]
pub struct FalsifyBudget {
    pub proposals: usize,
    pub seed: u64,
    /// Components whose joint response space exceeds this are held fixed.
    pub max_response_space: usize,
}

impl Default for FalsifyBudget {
    fn default() -> Self {
        FalsifyBudget { proposals: 10_000, seed: 0, max_response_space: 256 }
    }
}

/// Two observationally equivalent models with different query values.
#[derive(Debug, Clone)]
pub struct Witness {
    pub m1: DiscreteScm<f64>,
    pub m2: DiscreteScm<f64>,
    /// Total variation between the observed joints.
    pub tv: f64,
    /// Largest absolute query difference.
    pub gap: f64,
}

struct Component {
    members: Vec<NodeId>,
    /// Response-function count per member.
    sizes: Vec<usize>,
    space: usize,
    null: Option<DMatrix<f64>>,
}

struct Layout {
    g: CausalDiagram,
    observed: Vec<NodeId>,
    comps: Vec<Component>,
}

fn rows_of(g: &CausalDiagram, v: NodeId) -> usize {
    1usize << g.parents(v).len()
}

/// Value of member `i` of `c` at parent row `row` under joint response `u`.
fn response(c: &Component, u: usize, i: usize, row: usize) -> u32 {
    let mut u = u;
    for s in &c.sizes[..i] {
        u /= s;
    }
    let r = u % c.sizes[i];
    ((r >> row) & 1) as u32
}

fn layout(d: &CausalDiagram, max_space: usize) -> Layout {
    let keep: VarSet = d.ids().filter(|&v| d.kind(v) != NodeKind::Selection).collect();
    let g = d.induced(&keep).project_latents();
    let observed: Vec<NodeId> = g.observed().into_iter().collect();
    let mut comps = Vec::new();
    for members in g.c_components() {
        let members: Vec<NodeId> = members.into_iter().collect();
        let sizes: Vec<usize> = members.iter().map(|&v| 1usize << rows_of(&g, v)).collect();
        let space = sizes.iter().try_fold(1usize, |a, &s| a.checked_mul(s)).unwrap_or(usize::MAX);
        let mut c = Component { members, sizes, space, null: None };
        if space <= max_space {
            c.null = null_space(&g, &c);
        }
        comps.push(c);
    }
    Layout { g, observed, comps }
}

/// Null space of the map from q_C to P(v_C | pa(C) \ C).
fn null_space(g: &CausalDiagram, c: &Component) -> Option<DMatrix<f64>> {
    // rows: assignments to C and its outside parents
    let mut scope: Vec<NodeId> = c.members.clone();
    for &v in &c.members {
        for &p in g.parents(v) {
            if !scope.contains(&p) {
                scope.push(p);
            }
        }
    }
    let n_rows = 1usize << scope.len();
    let mut a = DMatrix::<f64>::zeros(n_rows, c.space);
    for row in 0..n_rows {
        let val = |v: NodeId| -> u32 { ((row >> scope.iter().position(|&s| s == v).unwrap()) & 1) as u32 };
        for u in 0..c.space {
            let ok = c.members.iter().enumerate().all(|(i, &v)| {
                let pa_row = g.parents(v).iter().enumerate().fold(0usize, |acc, (k, &p)| acc | ((val(p) as usize) << k));
                response(c, u, i, pa_row) == val(v)
            });
            if ok {
                a[(row, u)] = 1.0;
            }
        }
    }
    let eig = SymmetricEigen::new(a.transpose() * &a);
    let cols: Vec<usize> = (0..c.space).filter(|&i| eig.eigenvalues[i].abs() < 1e-9).collect();
    if cols.is_empty() {
        return None;
    }
    Some(DMatrix::from_columns(&cols.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect::<Vec<_>>()))
}

fn build(lay: &Layout, q: &[Vec<f64>]) -> DiscreteScm<f64> {
    let g = &lay.g;
    let mut b = DiagramBuilder::new();
    for &v in &lay.observed {
        b.node(g.name(v), NodeKind::Observed, 0).expect("unique");
    }
    let mut latent_names = Vec::new();
    let mut k = 0;
    for _ in &lay.comps {
        let name = loop {
            k += 1;
            let cand = format!("U{k}");
            if g.try_id(&cand).is_none() {
                break cand;
            }
        };
        b.node(&name, NodeKind::Latent, 0).expect("fresh");
        latent_names.push(name);
    }
    for (p, c) in g.directed_edges() {
        b.edge(g.name(p), g.name(c), 0).expect("observed edge");
    }
    for (ci, comp) in lay.comps.iter().enumerate() {
        for &v in &comp.members {
            b.edge(&latent_names[ci], g.name(v), 0).expect("latent edge");
        }
    }
    let d = b.build().expect("acyclic");
    let n = d.len();
    let mut card = vec![2u32; n];
    let mut exo = vec![vec![1.0]; n];
    let mut table = vec![Vec::new(); n];
    for (ci, comp) in lay.comps.iter().enumerate() {
        let u_id = d.id(&latent_names[ci]).unwrap();
        card[u_id.0] = comp.space as u32;
        exo[u_id.0] = q[ci].clone();
        table[u_id.0] = (0..comp.space as u32).collect();
        for (i, &v) in comp.members.iter().enumerate() {
            let dv = d.id(g.name(v)).unwrap();
            // parents in id order: observed parents, then the latent (last id)
            let obs_parents = d.parents(dv).len() - 1;
            let mut t = Vec::with_capacity((1 << obs_parents) * comp.space);
            for row in 0..(1usize << obs_parents) {
                // observed parents of dv share g's order, least significant last
                let mut pa_row = 0usize;
                for k in 0..obs_parents {
                    let bit = (row >> (obs_parents - 1 - k)) & 1;
                    pa_row |= bit << k;
                }
                for u in 0..comp.space {
                    t.push(response(comp, u, i, pa_row));
                }
            }
            table[dv.0] = t;
        }
    }
    DiscreteScm::from_parts(d, card, exo, table).expect("response model is valid")
}

fn query_values(e: &ProbExpr, m: &DiscreteScm<f64>) -> Option<Vec<f64>> {
    match eval_estimand(e, &PopEnv::single(m)).ok()? {
        EvalResult::Number(x) => Some(vec![x]),
        EvalResult::Dist(d) => Some(d.table.into_values().collect()),
    }
}

fn normalize_row(q: &mut [f64]) {
    for x in q.iter_mut() {
        if *x < 0.0 {
            *x = 0.0;
        }
    }
    let s: f64 = q.iter().sum();
    q.iter_mut().for_each(|x| *x /= s);
}

/// Looks for observationally equivalent models with query values at least
/// 0.05 apart. `None` means no witness within budget, not a proof.
pub fn falsify_identifiability(d: &CausalDiagram, query: &ProbExpr, budget: FalsifyBudget) -> Option<Witness> {
    let lay = layout(d, budget.max_response_space);
    if lay.comps.iter().all(|c| c.null.is_none()) {
        return None;
    }
    let observed: Vec<String> = lay.observed.iter().map(|&v| lay.g.name(v).to_string()).collect();
    let observed: Vec<&str> = observed.iter().map(String::as_str).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(budget.seed);
    let mut used = 0;
    let mut restart = 0;
    while used < budget.proposals {
        // first base point uniform, later ones random interior points
        let base: Vec<Vec<f64>> = lay
            .comps
            .iter()
            .map(|c| {
                let mut row: Vec<f64> =
                    (0..c.space).map(|_| if restart == 0 { 1.0 } else { 0.5 + rng.gen::<f64>() }).collect();
                normalize_row(&mut row);
                row
            })
            .collect();
        restart += 1;
        let m1 = build(&lay, &base);
        let q1 = query_values(query, &m1)?;
        let p1 = m1.eval_observational(&observed).ok()?;
        for (ci, comp) in lay.comps.iter().enumerate() {
            let Some(null) = &comp.null else { continue };
            for _ in 0..8 {
                if used >= budget.proposals {
                    return None;
                }
                used += 1;
                let w: Vec<f64> = (0..null.ncols()).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
                let delta = null * nalgebra::DVector::from_vec(w);
                let scale = delta.iter().fold(0.0f64, |a, x| a.max(x.abs()));
                if scale < 1e-12 {
                    continue;
                }
                for sign in [1.0, -1.0] {
                    let dir: Vec<f64> = delta.iter().map(|x| sign * x / scale).collect();
                    let t = base[ci]
                        .iter()
                        .zip(&dir)
                        .filter(|(_, &dx)| dx < 0.0)
                        .map(|(&qx, &dx)| qx / -dx)
                        .fold(f64::INFINITY, f64::min);
                    if !t.is_finite() {
                        continue;
                    }
                    let mut q2 = base.clone();
                    q2[ci] = base[ci].iter().zip(&dir).map(|(&qx, &dx)| qx + t * dx).collect();
                    normalize_row(&mut q2[ci]);
                    let m2 = build(&lay, &q2);
                    let Some(v2) = query_values(query, &m2) else { continue };
                    let gap = q1.iter().zip(&v2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                    if gap < 0.05 {
                        continue;
                    }
                    let tv = p1.tv_distance(&m2.eval_observational(&observed).ok()?);
                    if tv <= 1e-9 {
                        return Some(Witness { m1, m2, tv, gap });
                    }
                }
            }
        }
        if lay.comps.iter().all(|c| c.null.is_none()) {
            break;
        }
    }
    None
}
