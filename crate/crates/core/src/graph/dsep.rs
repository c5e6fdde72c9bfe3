use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{CausalDiagram, GraphError, NodeId, VarSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Separated,
    Connected,
}

/// Arrows removed from a base diagram before a separation query:
/// first everything into `cut_in`, then everything out of `cut_out`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mutilation {
    pub cut_in: Vec<String>,
    pub cut_out: Vec<String>,
}

impl Mutilation {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(d: &CausalDiagram, cut_in: &VarSet, cut_out: &VarSet) -> Self {
        Self { cut_in: d.names_of(cut_in), cut_out: d.names_of(cut_out) }
    }

    pub fn apply(&self, d: &CausalDiagram) -> Result<CausalDiagram, GraphError> {
        let cut_in = d.set(&self.cut_in)?;
        let cut_out = d.set(&self.cut_out)?;
        d.cut_incoming(&cut_in)?.cut_outgoing(&cut_out)
    }

    /// Subscript notation, e.g. `G[X̄ Z̲]`.
    pub fn tag(&self) -> String {
        let mut parts = Vec::new();
        if !self.cut_in.is_empty() {
            parts.push(format!("in:{}", self.cut_in.join(",")));
        }
        if !self.cut_out.is_empty() {
            parts.push(format!("out:{}", self.cut_out.join(",")));
        }
        if parts.is_empty() {
            "G".to_string()
        } else {
            format!("G[{}]", parts.join(" "))
        }
    }
}

/// A re-checkable record of one separation query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeparationCertificate {
    pub a: Vec<String>,
    pub b: Vec<String>,
    pub given: Vec<String>,
    pub mutilation: Mutilation,
    pub graph_tag: String,
    /// Fingerprint of the unmutilated diagram the query ran on.
    pub diagram: u64,
    pub verdict: Verdict,
    /// Alternating node / arrow tokens of an active path, present iff connected.
    pub witness: Option<Vec<String>>,
}

impl SeparationCertificate {
    pub fn separated(&self) -> bool {
        self.verdict == Verdict::Separated
    }

    /// Re-runs the query against `base` and checks that it reproduces.
    pub fn recheck(&self, base: &CausalDiagram) -> Result<bool, GraphError> {
        if base.fingerprint() != self.diagram {
            return Ok(false);
        }
        let fresh = certify(base, &self.mutilation, &base.set(&self.a)?, &base.set(&self.b)?, &base.set(&self.given)?)?;
        Ok(fresh == *self)
    }

    pub fn witness_text(&self) -> Option<String> {
        self.witness.as_ref().map(|w| w.join(" "))
    }
}

/// Separation query on the unmutilated diagram.
pub fn d_separated(d: &CausalDiagram, a: &VarSet, b: &VarSet, c: &VarSet) -> Result<SeparationCertificate, GraphError> {
    certify(d, &Mutilation::none(), a, b, c)
}

/// Separation query on `base` after `mutilation`, evaluated on the
/// latent-canonicalized graph.
pub fn certify(
    base: &CausalDiagram,
    mutilation: &Mutilation,
    a: &VarSet,
    b: &VarSet,
    c: &VarSet,
) -> Result<SeparationCertificate, GraphError> {
    base.check_disjoint(&[a, b, c])?;
    let g = mutilation.apply(base)?.latent_canonicalize();
    let verdict = if dsep_verdict(&g, a, b, c) { Verdict::Separated } else { Verdict::Connected };
    let witness = match verdict {
        Verdict::Separated => None,
        Verdict::Connected => Some(first_active_path(&g, a, b, c).expect("reachability found a connection")),
    };
    Ok(SeparationCertificate {
        a: base.names_of(a),
        b: base.names_of(b),
        given: base.names_of(c),
        mutilation: mutilation.clone(),
        graph_tag: mutilation.tag(),
        diagram: base.fingerprint(),
        verdict,
        witness,
    })
}

/// Reachability ("Bayes ball") test; `g` must have no bidirected arcs.
/// Returns true when `a` and `b` are d-separated given `c`.
pub fn dsep_verdict(g: &CausalDiagram, a: &VarSet, b: &VarSet, c: &VarSet) -> bool {
    debug_assert!(g.bidirected_edges().is_empty());
    if a.is_empty() || b.is_empty() {
        return true;
    }
    let anc_c = g.ancestors(c);
    // (node, arrived_from_child): true = travelling up, false = travelling down
    let mut visited: BTreeSet<(NodeId, bool)> = BTreeSet::new();
    let mut stack: Vec<(NodeId, bool)> = a.iter().map(|&v| (v, true)).collect();
    while let Some((v, up)) = stack.pop() {
        if !visited.insert((v, up)) {
            continue;
        }
        if !c.contains(&v) && b.contains(&v) {
            return false;
        }
        if up {
            if !c.contains(&v) {
                stack.extend(g.parents(v).iter().map(|&p| (p, true)));
                stack.extend(g.children(v).iter().map(|&ch| (ch, false)));
            }
        } else {
            if !c.contains(&v) {
                stack.extend(g.children(v).iter().map(|&ch| (ch, false)));
            }
            if anc_c.contains(&v) {
                stack.extend(g.parents(v).iter().map(|&p| (p, true)));
            }
        }
    }
    true
}

/// Depth-first search for the first active simple path, exploring start
/// nodes and neighbours in canonical order. Intermediate nodes avoid `a`
/// and `b` (any active path has such a sub-path).
fn first_active_path(g: &CausalDiagram, a: &VarSet, b: &VarSet, c: &VarSet) -> Option<Vec<String>> {
    let anc_c = g.ancestors(c);
    // neighbour list: (node, true if the arrow points into the neighbour)
    let neighbours = |v: NodeId| -> Vec<(NodeId, bool)> {
        let mut out: Vec<(NodeId, bool)> = g
            .parents(v)
            .iter()
            .map(|&p| (p, false))
            .chain(g.children(v).iter().map(|&ch| (ch, true)))
            .collect();
        out.sort();
        out
    };
    struct Frame {
        path: Vec<NodeId>,
        into: Vec<bool>,
    }
    fn dfs(
        g: &CausalDiagram,
        frame: &mut Frame,
        b: &VarSet,
        a: &VarSet,
        c: &VarSet,
        anc_c: &VarSet,
        neighbours: &dyn Fn(NodeId) -> Vec<(NodeId, bool)>,
    ) -> bool {
        let v = *frame.path.last().unwrap();
        for (n, into_n) in neighbours(v) {
            if frame.path.contains(&n) || a.contains(&n) {
                continue;
            }
            // v is interior once we step past it; check its triple
            if frame.path.len() >= 2 {
                let into_v = *frame.into.last().unwrap();
                let collider = into_v && !into_n;
                let open = if collider { anc_c.contains(&v) } else { !c.contains(&v) };
                if !open {
                    continue;
                }
            }
            frame.path.push(n);
            frame.into.push(into_n);
            if b.contains(&n) {
                return true;
            }
            if dfs(g, frame, b, a, c, anc_c, neighbours) {
                return true;
            }
            frame.path.pop();
            frame.into.pop();
        }
        false
    }
    for &start in a {
        let mut frame = Frame { path: vec![start], into: vec![] };
        if dfs(g, &mut frame, b, a, c, &anc_c, &neighbours) {
            let mut tokens = vec![g.name(frame.path[0]).to_string()];
            for (i, &into) in frame.into.iter().enumerate() {
                tokens.push(if into { "->" } else { "<-" }.to_string());
                tokens.push(g.name(frame.path[i + 1]).to_string());
            }
            return Some(tokens);
        }
    }
    None
}
