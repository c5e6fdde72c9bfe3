//! Fully specified discrete structural causal models, evaluated exactly.
//!
//! Every node of the latent-canonicalized diagram (observed or latent) has a
//! dedicated exogenous variable `U_v` and a function `f_v(pa_v, u_v)`.
//! Evaluation propagates a joint table through the nodes in topological
//! order, summing each `U_v` out as soon as its node is computed and dropping
//! nodes once all their children are done.

mod estimand;
mod falsify;
mod io;
mod random;

pub use estimand::{eval_estimand, EvalError, EvalResult, PopEnv};
pub use falsify::{falsify_identifiability, FalsifyBudget, Witness};
pub use io::ScmFileError;
pub use random::{random_pair, random_scm, random_scm_with};

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::graph::{CausalDiagram, GraphError, NodeId, NodeKind};
use crate::scalar::Prob;

#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteScm<T> {
    diagram: CausalDiagram,
    card: Vec<u32>,
    exo: Vec<Vec<T>>,
    /// Row-major over (parent values in id order, u): `table[row * |U| + u]`.
    table: Vec<Vec<u32>>,
}

/// A probability table over named variables.
#[derive(Debug, Clone, PartialEq)]
pub struct Dist<T> {
    pub vars: Vec<String>,
    pub table: BTreeMap<Vec<u32>, T>,
}

impl<T: Prob> Dist<T> {
    pub fn get(&self, vals: &[u32]) -> T {
        self.table.get(vals).cloned().unwrap_or_else(T::zero)
    }

    pub fn total(&self) -> T {
        self.table.values().fold(T::zero(), |a, b| a + b.clone())
    }

    pub fn marginal(&self, keep: &[&str]) -> Dist<T> {
        let idx: Vec<usize> = keep.iter().map(|k| self.vars.iter().position(|v| v == k).expect("variable in table")).collect();
        let mut table = BTreeMap::new();
        for (k, p) in &self.table {
            let key: Vec<u32> = idx.iter().map(|&i| k[i]).collect();
            let e = table.entry(key).or_insert_with(T::zero);
            *e = e.clone() + p.clone();
        }
        Dist { vars: keep.iter().map(|s| s.to_string()).collect(), table }
    }

    /// Total variation distance, in f64.
    pub fn tv_distance(&self, other: &Dist<T>) -> f64 {
        assert_eq!(self.vars, other.vars);
        let keys: BTreeSet<&Vec<u32>> = self.table.keys().chain(other.table.keys()).collect();
        0.5 * keys.into_iter().map(|k| (self.get(k) - other.get(k)).to_f64().abs()).sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ScmError {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("node `{0}` is not an observed variable of the model")]
    NotObserved(String),
    #[error("value {value} outside the domain of `{node}`")]
    OutOfDomain { node: String, value: u32 },
    #[error("invalid model: {0}")]
    Invalid(String),
}

/// Per-world replacement of a node's mechanism.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Override {
    Const(u32),
    /// Take the node's value from another world.
    Copy(usize),
}

/// A natural-direct-effect query on one model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NdeQuery {
    pub treatment: String,
    pub mediator: String,
    pub outcome: String,
    pub active: u32,
    pub reference: u32,
}

impl NdeQuery {
    pub fn new(treatment: &str, mediator: &str, outcome: &str) -> Self {
        NdeQuery {
            treatment: treatment.into(),
            mediator: mediator.into(),
            outcome: outcome.into(),
            active: 1,
            reference: 0,
        }
    }
}

impl<T: Prob> DiscreteScm<T> {
    /// Assembles a model; `diagram` must have no bidirected arcs.
    pub fn from_parts(diagram: CausalDiagram, card: Vec<u32>, exo: Vec<Vec<T>>, table: Vec<Vec<u32>>) -> Result<Self, ScmError> {
        let m = DiscreteScm { diagram, card, exo, table };
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<(), ScmError> {
        let d = &self.diagram;
        let n = d.len();
        if !d.bidirected_edges().is_empty() {
            return Err(ScmError::Invalid("diagram must be latent-canonicalized".into()));
        }
        if self.card.len() != n || self.exo.len() != n || self.table.len() != n {
            return Err(ScmError::Invalid("per-node arrays do not match the diagram".into()));
        }
        for v in d.ids() {
            let name = d.name(v);
            if d.kind(v) == NodeKind::Selection {
                return Err(ScmError::Invalid(format!("selection node `{name}` has no mechanism")));
            }
            if self.card[v.0] == 0 || self.exo[v.0].is_empty() {
                return Err(ScmError::Invalid(format!("empty domain at `{name}`")));
            }
            let total = self.exo[v.0].iter().fold(T::zero(), |a, b| a + b.clone());
            if (total - T::one()).to_f64().abs() > T::normalization_slack() || self.exo[v.0].iter().any(|p| p.is_negative()) {
                return Err(ScmError::Invalid(format!("exogenous table of `{name}` is not a distribution")));
            }
            if self.table[v.0].len() != self.rows(v) * self.exo[v.0].len() {
                return Err(ScmError::Invalid(format!("function table of `{name}` is not total")));
            }
            if self.table[v.0].iter().any(|&x| x >= self.card[v.0]) {
                return Err(ScmError::Invalid(format!("function of `{name}` leaves its domain")));
            }
        }
        Ok(())
    }

    fn rows(&self, v: NodeId) -> usize {
        self.diagram.parents(v).iter().map(|p| self.card[p.0] as usize).product()
    }

    pub fn diagram(&self) -> &CausalDiagram {
        &self.diagram
    }

    pub fn card(&self, node: &str) -> Option<u32> {
        self.diagram.try_id(node).map(|v| self.card[v.0])
    }

    pub fn observed_names(&self) -> Vec<String> {
        self.diagram.names_of(&self.diagram.observed())
    }

    pub(crate) fn exo(&self, v: NodeId) -> &[T] {
        &self.exo[v.0]
    }

    pub(crate) fn table(&self, v: NodeId) -> &[u32] {
        &self.table[v.0]
    }

    pub(crate) fn cards(&self) -> &[u32] {
        &self.card
    }

    /// Replaces one node's exogenous table and function.
    pub(crate) fn set_mechanism(&mut self, v: NodeId, exo: Vec<T>, table: Vec<u32>) {
        self.exo[v.0] = exo;
        self.table[v.0] = table;
    }

    /// Maps the model into another scalar type.
    pub fn convert<U: Prob>(&self, f: impl Fn(&T) -> U) -> DiscreteScm<U> {
        DiscreteScm {
            diagram: self.diagram.clone(),
            card: self.card.clone(),
            exo: self.exo.iter().map(|row| row.iter().map(&f).collect()).collect(),
            table: self.table.clone(),
        }
    }

    fn observed_id(&self, name: &str) -> Result<NodeId, ScmError> {
        let v = self.diagram.id(name)?;
        if self.diagram.kind(v) != NodeKind::Observed {
            return Err(ScmError::NotObserved(name.to_string()));
        }
        Ok(v)
    }

    fn assignment(&self, dos: &[(&str, u32)]) -> Result<BTreeMap<NodeId, Override>, ScmError> {
        let mut out = BTreeMap::new();
        for &(name, value) in dos {
            let v = self.observed_id(name)?;
            if value >= self.card[v.0] {
                return Err(ScmError::OutOfDomain { node: name.to_string(), value });
            }
            out.insert(v, Override::Const(value));
        }
        Ok(out)
    }

    pub fn eval_observational(&self, vars: &[&str]) -> Result<Dist<T>, ScmError> {
        self.eval_interventional(&[], vars)
    }

    /// Distribution of `vars` in the submodel where each `dos` variable is
    /// held at its value.
    pub fn eval_interventional(&self, dos: &[(&str, u32)], vars: &[&str]) -> Result<Dist<T>, ScmError> {
        let world = self.assignment(dos)?;
        let keep = vars.iter().map(|n| Ok((0, self.observed_id(n)?))).collect::<Result<Vec<_>, ScmError>>()?;
        let table = self.propagate(&[world], &keep);
        Ok(Dist { vars: vars.iter().map(|s| s.to_string()).collect(), table })
    }

    /// E(Y_{x, M_{x'}}) − E(Y_{x'}) by enumerating a twin network that
    /// shares every exogenous variable between the two worlds.
    pub fn eval_nde(&self, q: &NdeQuery) -> Result<T, ScmError> {
        let x = self.observed_id(&q.treatment)?;
        let m = self.observed_id(&q.mediator)?;
        let y = self.observed_id(&q.outcome)?;
        for value in [q.active, q.reference] {
            if value >= self.card[x.0] {
                return Err(ScmError::OutOfDomain { node: q.treatment.clone(), value });
            }
        }
        // world 0: do(X = reference); world 1: do(X = active, M = M of world 0)
        let w0: BTreeMap<NodeId, Override> = [(x, Override::Const(q.reference))].into();
        let w1: BTreeMap<NodeId, Override> = [(x, Override::Const(q.active)), (m, Override::Copy(0))].into();
        let joint = self.propagate(&[w0, w1], &[(0, y), (1, y)]);
        let mut out = T::zero();
        for (k, p) in joint {
            let diff = T::from_i64(k[1] as i64) - T::from_i64(k[0] as i64);
            out = out + diff * p;
        }
        Ok(out)
    }

    /// Mean of a numeric variable under an intervention.
    pub fn expectation(&self, dos: &[(&str, u32)], var: &str) -> Result<T, ScmError> {
        let d = self.eval_interventional(dos, &[var])?;
        Ok(d.table.into_iter().fold(T::zero(), |a, (k, p)| a + T::from_i64(k[0] as i64) * p))
    }

    /// Forward propagation over several worlds sharing all exogenous noise.
    /// Returns the joint of `keep` (world, node) pairs.
    pub(crate) fn propagate(&self, worlds: &[BTreeMap<NodeId, Override>], keep: &[(usize, NodeId)]) -> BTreeMap<Vec<u32>, T> {
        let d = &self.diagram;
        let order = d.topological_order();
        let pos: HashMap<NodeId, usize> = order.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let kept: BTreeSet<NodeId> = keep.iter().map(|&(_, v)| v).collect();
        // step after which a node is no longer needed
        let last_use: Vec<usize> = d
            .ids()
            .map(|v| {
                if kept.contains(&v) {
                    usize::MAX
                } else {
                    d.children(v).iter().map(|c| pos[c]).max().unwrap_or(pos[&v])
                }
            })
            .collect();
        // copy-worlds are computed after the worlds they read from
        let mut world_order: Vec<usize> = (0..worlds.len()).collect();
        world_order.sort_by_key(|&w| worlds[w].values().any(|o| matches!(o, Override::Copy(_))));

        let mut live: Vec<(usize, NodeId)> = Vec::new();
        let mut table: BTreeMap<Vec<u32>, T> = BTreeMap::from([(Vec::new(), T::one())]);
        for (step, &v) in order.iter().enumerate() {
            let parents: Vec<NodeId> = d.parents(v).iter().copied().collect();
            let parent_cols: Vec<Vec<usize>> = (0..worlds.len())
                .map(|w| {
                    parents.iter().map(|p| live.iter().position(|&c| c == (w, *p)).expect("parent is live")).collect()
                })
                .collect();
            let ucard = self.exo[v.0].len();
            let all_fixed = worlds.iter().all(|w| w.contains_key(&v));
            let mut next: BTreeMap<Vec<u32>, T> = BTreeMap::new();
            let mut vals = vec![0u32; worlds.len()];
            for (key, p) in &table {
                let us: Vec<usize> = if all_fixed { vec![usize::MAX] } else { (0..ucard).collect() };
                for u in us {
                    let pu = if u == usize::MAX { T::one() } else { self.exo[v.0][u].clone() };
                    if pu.is_zero() {
                        continue;
                    }
                    for &w in &world_order {
                        vals[w] = match worlds[w].get(&v) {
                            Some(Override::Const(c)) => *c,
                            Some(Override::Copy(src)) => vals[*src],
                            None => {
                                let mut row = 0usize;
                                for (i, p) in parents.iter().enumerate() {
                                    row = row * self.card[p.0] as usize + key[parent_cols[w][i]] as usize;
                                }
                                self.table[v.0][row * ucard + u]
                            }
                        };
                    }
                    let mut k = key.clone();
                    k.extend_from_slice(&vals);
                    let e = next.entry(k).or_insert_with(T::zero);
                    *e = e.clone() + p.clone() * pu;
                }
            }
            live.extend((0..worlds.len()).map(|w| (w, v)));
            table = next;
            // drop nodes whose last consumer was this step
            let dead: Vec<usize> = (0..live.len()).filter(|&i| last_use[live[i].1 .0] <= step).collect();
            if !dead.is_empty() {
                let keep_cols: Vec<usize> = (0..live.len()).filter(|i| !dead.contains(i)).collect();
                let mut merged: BTreeMap<Vec<u32>, T> = BTreeMap::new();
                for (k, p) in table {
                    let nk: Vec<u32> = keep_cols.iter().map(|&i| k[i]).collect();
                    let e = merged.entry(nk).or_insert_with(T::zero);
                    *e = e.clone() + p;
                }
                live = keep_cols.iter().map(|&i| live[i]).collect();
                table = merged;
            }
        }
        let cols: Vec<usize> = keep.iter().map(|c| live.iter().position(|l| l == c).expect("kept column")).collect();
        let mut out: BTreeMap<Vec<u32>, T> = BTreeMap::new();
        for (k, p) in table {
            let nk: Vec<u32> = cols.iter().map(|&i| k[i]).collect();
            let e = out.entry(nk).or_insert_with(T::zero);
            *e = e.clone() + p;
        }
        out
    }
}
