//! Causal diagrams: directed edges, latent-confounder (bidirected) edges,
//! explicit latent nodes and selection nodes.
//!
//! Node order is fixed at construction and is the canonical order used for
//! every rendering and every search tie-break. `NodeId`s are indices into that
//! order, so a `BTreeSet<NodeId>` is always canonically sorted.

mod dsep;

pub use dsep::{certify, d_separated, dsep_verdict, Mutilation, SeparationCertificate, Verdict};

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub usize);

pub type VarSet = BTreeSet<NodeId>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKind {
    Observed,
    Latent,
    Selection,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("line {line}: directed cycle through {node}")]
    Cycle { line: usize, node: String },
    #[error("line {line}: duplicate node `{name}`")]
    DuplicateNode { line: usize, name: String },
    #[error("line {line}: unknown node `{name}` in edge")]
    UnknownNodeInEdge { line: usize, name: String },
    #[error("line {line}: {msg}")]
    MalformedDecl { line: usize, msg: String },
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("node sets overlap on `{0}`")]
    OverlappingSets(String),
}

/// Which way `relatives` walks the directed edges.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Ancestors,
    Descendants,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CausalDiagram {
    names: Vec<String>,
    kinds: Vec<NodeKind>,
    parents: Vec<BTreeSet<NodeId>>,
    children: Vec<BTreeSet<NodeId>>,
    bidirected: BTreeSet<(NodeId, NodeId)>,
    index: HashMap<String, NodeId>,
}

pub(crate) fn valid_token(name: &str) -> bool {
    !name.is_empty() && name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_')
}

/// Incremental construction with line-tagged errors; `build` checks acyclicity.
#[derive(Debug, Default, Clone)]
pub struct DiagramBuilder {
    names: Vec<String>,
    kinds: Vec<NodeKind>,
    index: HashMap<String, NodeId>,
    directed: Vec<(NodeId, NodeId, usize)>,
    bidirected: Vec<(NodeId, NodeId, usize)>,
}

impl DiagramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn node(&mut self, name: &str, kind: NodeKind, line: usize) -> Result<NodeId, GraphError> {
        if !valid_token(name) {
            return Err(GraphError::MalformedDecl { line, msg: format!("invalid node name `{name}`") });
        }
        if self.index.contains_key(name) {
            return Err(GraphError::DuplicateNode { line, name: name.to_string() });
        }
        let id = NodeId(self.names.len());
        self.names.push(name.to_string());
        self.kinds.push(kind);
        self.index.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn lookup(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.kinds[id.0]
    }

    fn resolve(&self, name: &str, line: usize) -> Result<NodeId, GraphError> {
        self.lookup(name).ok_or_else(|| GraphError::UnknownNodeInEdge { line, name: name.to_string() })
    }

    pub fn edge(&mut self, from: &str, to: &str, line: usize) -> Result<(), GraphError> {
        let a = self.resolve(from, line)?;
        let b = self.resolve(to, line)?;
        if a == b {
            return Err(GraphError::MalformedDecl { line, msg: format!("self-loop on `{from}`") });
        }
        if self.kinds[b.0] == NodeKind::Selection {
            return Err(GraphError::MalformedDecl { line, msg: format!("selection node `{to}` cannot have parents") });
        }
        if self.directed.iter().any(|&(x, y, _)| x == a && y == b) {
            return Err(GraphError::MalformedDecl { line, msg: format!("duplicate edge {from} -> {to}") });
        }
        self.directed.push((a, b, line));
        Ok(())
    }

    pub fn bidirected(&mut self, a: &str, b: &str, line: usize) -> Result<(), GraphError> {
        let x = self.resolve(a, line)?;
        let y = self.resolve(b, line)?;
        if x == y {
            return Err(GraphError::MalformedDecl { line, msg: format!("self-loop on `{a}`") });
        }
        if self.kinds[x.0] != NodeKind::Observed || self.kinds[y.0] != NodeKind::Observed {
            return Err(GraphError::MalformedDecl {
                line,
                msg: format!("bidirected edge {a} <-> {b} must join observed nodes"),
            });
        }
        let key = (x.min(y), x.max(y));
        if self.bidirected.iter().any(|&(p, q, _)| (p, q) == key) {
            return Err(GraphError::MalformedDecl { line, msg: format!("duplicate edge {a} <-> {b}") });
        }
        self.bidirected.push((key.0, key.1, line));
        Ok(())
    }

    /// Adds a fresh selection node pointing at `target`.
    pub fn selection(&mut self, sel: &str, target: &str, line: usize) -> Result<(), GraphError> {
        let t = self.resolve(target, line)?;
        if self.kinds[t.0] == NodeKind::Selection {
            return Err(GraphError::MalformedDecl { line, msg: "selection edge must target a variable".into() });
        }
        self.node(sel, NodeKind::Selection, line)?;
        self.edge(sel, target, line)
    }

    pub fn build(self) -> Result<CausalDiagram, GraphError> {
        let n = self.names.len();
        let mut parents = vec![BTreeSet::new(); n];
        let mut children = vec![BTreeSet::new(); n];
        let mut edge_line = BTreeMap::new();
        for &(a, b, line) in &self.directed {
            parents[b.0].insert(a);
            children[a.0].insert(b);
            edge_line.insert((a, b), line);
        }
        // Kahn's algorithm; whatever remains sits on or behind a cycle.
        let mut indeg: Vec<usize> = parents.iter().map(|p| p.len()).collect();
        let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for c in &children[v] {
                indeg[c.0] -= 1;
                if indeg[c.0] == 0 {
                    stack.push(c.0);
                }
            }
        }
        if seen < n {
            // report the latest-declared edge between two cyclic nodes
            let (&(_, b), &line) = edge_line
                .iter()
                .filter(|((a, b), _)| indeg[a.0] > 0 && indeg[b.0] > 0)
                .max_by_key(|(_, &l)| l)
                .expect("cycle implies an edge inside it");
            return Err(GraphError::Cycle { line, node: self.names[b.0].clone() });
        }
        Ok(CausalDiagram {
            names: self.names,
            kinds: self.kinds,
            parents,
            children,
            bidirected: self.bidirected.iter().map(|&(a, b, _)| (a, b)).collect(),
            index: self.index,
        })
    }
}

impl CausalDiagram {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> + '_ {
        (0..self.names.len()).map(NodeId)
    }

    pub fn name(&self, id: NodeId) -> &str {
        &self.names[id.0]
    }

    pub fn kind(&self, id: NodeId) -> NodeKind {
        self.kinds[id.0]
    }

    pub fn id(&self, name: &str) -> Result<NodeId, GraphError> {
        self.index.get(name).copied().ok_or_else(|| GraphError::UnknownNode(name.to_string()))
    }

    pub fn try_id(&self, name: &str) -> Option<NodeId> {
        self.index.get(name).copied()
    }

    /// Resolves a list of names into a canonical set.
    pub fn set<S: AsRef<str>>(&self, names: &[S]) -> Result<VarSet, GraphError> {
        names.iter().map(|n| self.id(n.as_ref())).collect()
    }

    pub fn names_of(&self, set: &VarSet) -> Vec<String> {
        set.iter().map(|&v| self.names[v.0].clone()).collect()
    }

    pub fn observed(&self) -> VarSet {
        self.ids().filter(|&v| self.kinds[v.0] == NodeKind::Observed).collect()
    }

    pub fn selection_nodes(&self) -> VarSet {
        self.ids().filter(|&v| self.kinds[v.0] == NodeKind::Selection).collect()
    }

    pub fn parents(&self, v: NodeId) -> &BTreeSet<NodeId> {
        &self.parents[v.0]
    }

    pub fn children(&self, v: NodeId) -> &BTreeSet<NodeId> {
        &self.children[v.0]
    }

    pub fn bidirected_edges(&self) -> &BTreeSet<(NodeId, NodeId)> {
        &self.bidirected
    }

    pub fn directed_edges(&self) -> impl Iterator<Item = (NodeId, NodeId)> + '_ {
        self.ids().flat_map(move |c| self.parents[c.0].iter().map(move |&p| (p, c)))
    }

    pub fn has_edge(&self, from: NodeId, to: NodeId) -> bool {
        self.children[from.0].contains(&to)
    }

    pub fn has_bidirected(&self, a: NodeId, b: NodeId) -> bool {
        self.bidirected.contains(&(a.min(b), a.max(b)))
    }

    pub(crate) fn check_known(&self, set: &VarSet) -> Result<(), GraphError> {
        match set.iter().find(|v| v.0 >= self.len()) {
            Some(v) => Err(GraphError::UnknownNode(format!("#{}", v.0))),
            None => Ok(()),
        }
    }

    pub(crate) fn check_disjoint(&self, sets: &[&VarSet]) -> Result<(), GraphError> {
        for (i, a) in sets.iter().enumerate() {
            self.check_known(a)?;
            for b in &sets[i + 1..] {
                if let Some(v) = a.intersection(b).next() {
                    return Err(GraphError::OverlappingSets(self.name(*v).to_string()));
                }
            }
        }
        Ok(())
    }

    /// `G_X̄`: drops every arrow into `x`, including latent-confounder arcs.
    pub fn cut_incoming(&self, x: &VarSet) -> Result<CausalDiagram, GraphError> {
        self.check_known(x)?;
        let mut out = self.clone();
        for &v in x {
            for p in std::mem::take(&mut out.parents[v.0]) {
                out.children[p.0].remove(&v);
            }
        }
        out.bidirected.retain(|(a, b)| !x.contains(a) && !x.contains(b));
        Ok(out)
    }

    /// `G_X̲`: drops every arrow out of `x`; bidirected arcs stay.
    pub fn cut_outgoing(&self, x: &VarSet) -> Result<CausalDiagram, GraphError> {
        self.check_known(x)?;
        let mut out = self.clone();
        for &v in x {
            for c in std::mem::take(&mut out.children[v.0]) {
                out.parents[c.0].remove(&v);
            }
        }
        Ok(out)
    }

    pub fn relatives(&self, s: &VarSet, dir: Direction, inclusive: bool) -> Result<VarSet, GraphError> {
        self.check_known(s)?;
        let mut seen = VarSet::new();
        let mut stack: Vec<NodeId> = s.iter().copied().collect();
        while let Some(v) = stack.pop() {
            let next = match dir {
                Direction::Ancestors => &self.parents[v.0],
                Direction::Descendants => &self.children[v.0],
            };
            for &u in next {
                if seen.insert(u) {
                    stack.push(u);
                }
            }
        }
        if inclusive {
            seen.extend(s.iter().copied());
        } else {
            seen.retain(|v| !s.contains(v));
        }
        Ok(seen)
    }

    pub fn ancestors(&self, s: &VarSet) -> VarSet {
        self.relatives(s, Direction::Ancestors, true).expect("known nodes")
    }

    pub fn descendants(&self, s: &VarSet) -> VarSet {
        self.relatives(s, Direction::Descendants, true).expect("known nodes")
    }

    /// Z(W) of the third rule: the members of `z` that are not ancestors of
    /// any `w` once arrows into `x` are removed.
    pub fn rule3_zw(&self, x: &VarSet, z: &VarSet, w: &VarSet) -> Result<VarSet, GraphError> {
        self.check_disjoint(&[x, z, w])?;
        let anc = self.cut_incoming(x)?.ancestors(w);
        Ok(z.difference(&anc).copied().collect())
    }

    /// Components of the bidirected part, restricted to observed nodes.
    pub fn c_components(&self) -> Vec<VarSet> {
        let observed = self.observed();
        let mut comp: BTreeMap<NodeId, NodeId> = observed.iter().map(|&v| (v, v)).collect();
        fn find(comp: &mut BTreeMap<NodeId, NodeId>, v: NodeId) -> NodeId {
            let p = comp[&v];
            if p == v {
                return v;
            }
            let r = find(comp, p);
            comp.insert(v, r);
            r
        }
        for &(a, b) in &self.bidirected {
            let (ra, rb) = (find(&mut comp, a), find(&mut comp, b));
            if ra != rb {
                comp.insert(ra.max(rb), ra.min(rb));
            }
        }
        let mut groups: BTreeMap<NodeId, VarSet> = BTreeMap::new();
        for &v in &observed {
            let r = find(&mut comp, v);
            groups.entry(r).or_default().insert(v);
        }
        groups.into_values().collect()
    }

    /// Replaces each bidirected arc by a fresh latent parent of both ends.
    /// Existing node ids are preserved; new latents are appended.
    pub fn latent_canonicalize(&self) -> CausalDiagram {
        if self.bidirected.is_empty() {
            return self.clone();
        }
        let mut out = self.clone();
        out.bidirected.clear();
        let mut k = 0;
        for &(a, b) in &self.bidirected {
            let name = loop {
                k += 1;
                let candidate = format!("L{k}");
                if !out.index.contains_key(&candidate) {
                    break candidate;
                }
            };
            let id = NodeId(out.names.len());
            out.index.insert(name.clone(), id);
            out.names.push(name);
            out.kinds.push(NodeKind::Latent);
            out.parents.push(BTreeSet::new());
            out.children.push([a, b].into_iter().collect());
            out.parents[a.0].insert(id);
            out.parents[b.0].insert(id);
        }
        out
    }

    /// Latent projection onto the observed and selection nodes: A → B when a
    /// directed path runs from A to B through latents only, A ↔ B when some
    /// latent reaches both through latents only. Ids are renumbered but
    /// relative order is kept.
    pub fn project_latents(&self) -> CausalDiagram {
        let keep: Vec<NodeId> = self.ids().filter(|&v| self.kinds[v.0] != NodeKind::Latent).collect();
        if keep.len() == self.len() {
            return self.clone();
        }
        let mut b = DiagramBuilder::new();
        for &v in &keep {
            b.node(&self.names[v.0], self.kinds[v.0], 0).expect("unique");
        }
        // observed endpoints reachable through latent-only directed paths
        let latent_reach = |start: NodeId| -> VarSet {
            let mut out = VarSet::new();
            let mut seen = VarSet::new();
            let mut stack = vec![start];
            while let Some(v) = stack.pop() {
                for &c in &self.children[v.0] {
                    if self.kinds[c.0] == NodeKind::Latent {
                        if seen.insert(c) {
                            stack.push(c);
                        }
                    } else {
                        out.insert(c);
                    }
                }
            }
            out
        };
        let mut directed = BTreeSet::new();
        for &v in &keep {
            for c in latent_reach(v) {
                directed.insert((v, c));
            }
        }
        let mut bi = BTreeSet::new();
        for l in self.ids().filter(|&v| self.kinds[v.0] == NodeKind::Latent) {
            let r: Vec<NodeId> = latent_reach(l).into_iter().filter(|v| self.kinds[v.0] == NodeKind::Observed).collect();
            for i in 0..r.len() {
                for j in i + 1..r.len() {
                    bi.insert((r[i], r[j]));
                }
            }
        }
        bi.extend(self.bidirected.iter().copied());
        for (p, c) in directed {
            b.edge(&self.names[p.0], &self.names[c.0], 0).expect("projection is acyclic");
        }
        for (x, y) in bi {
            b.bidirected(&self.names[x.0], &self.names[y.0], 0).expect("observed ends");
        }
        b.build().expect("projection of a DAG is a DAG")
    }

    /// Sub-diagram induced by `keep` (names and relative order preserved).
    pub fn induced(&self, keep: &VarSet) -> CausalDiagram {
        let mut b = DiagramBuilder::new();
        for &v in keep {
            b.node(&self.names[v.0], self.kinds[v.0], 0).expect("unique");
        }
        for (p, c) in self.directed_edges() {
            if keep.contains(&p) && keep.contains(&c) {
                b.edge(&self.names[p.0], &self.names[c.0], 0).expect("subgraph");
            }
        }
        for &(x, y) in &self.bidirected {
            if keep.contains(&x) && keep.contains(&y) {
                b.bidirected(&self.names[x.0], &self.names[y.0], 0).expect("subgraph");
            }
        }
        b.build().expect("subgraph of a DAG")
    }

    /// Topological order, ties broken by canonical order.
    pub fn topological_order(&self) -> Vec<NodeId> {
        let mut indeg: Vec<usize> = self.parents.iter().map(|p| p.len()).collect();
        let mut ready: BTreeSet<NodeId> = self.ids().filter(|v| indeg[v.0] == 0).collect();
        let mut out = Vec::with_capacity(self.len());
        while let Some(v) = ready.pop_first() {
            out.push(v);
            for c in &self.children[v.0] {
                indeg[c.0] -= 1;
                if indeg[c.0] == 0 {
                    ready.insert(*c);
                }
            }
        }
        out
    }

    /// Canonical text form in the graph DSL.
    pub fn to_dsl(&self) -> String {
        let mut s = String::new();
        let obs: Vec<&str> = self.ids().filter(|&v| self.kind(v) == NodeKind::Observed).map(|v| self.name(v)).collect();
        s.push_str(&format!("nodes: {}\n", obs.join(", ")));
        let lat: Vec<&str> = self.ids().filter(|&v| self.kind(v) == NodeKind::Latent).map(|v| self.name(v)).collect();
        if !lat.is_empty() {
            s.push_str(&format!("latent: {}\n", lat.join(", ")));
        }
        for (p, c) in self.directed_edges() {
            if self.kind(p) == NodeKind::Selection {
                s.push_str(&format!("{} ~> {}\n", self.name(p), self.name(c)));
            } else {
                s.push_str(&format!("{} -> {}\n", self.name(p), self.name(c)));
            }
        }
        for &(a, b) in &self.bidirected {
            s.push_str(&format!("{} <-> {}\n", self.name(a), self.name(b)));
        }
        s
    }

    /// Stable 64-bit FNV-1a digest of the canonical form.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf29ce484222325;
        for byte in self.to_dsl().bytes() {
            h ^= byte as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
        h
    }

}

impl fmt::Display for CausalDiagram {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_dsl())
    }
}
