//! Selection diagrams, transport formulas, population invariance and
//! multi-study synthesis.

mod adapt;
mod synth;
mod transfer;

pub use adapt::{adapt_factorization, AdaptationPlan, AdaptedFactor};
pub use synth::{meta_synthesize, StudyContribution, SubRelation, SynthesisError, SynthesisPlan};
pub use transfer::{invariant_term, transport_effect, TransportError, TransportFormula};

use crate::graph::{CausalDiagram, DiagramBuilder, GraphError, NodeId, NodeKind, VarSet};

/// A diagram whose selection nodes each point at exactly one variable.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelectionDiagram {
    diagram: CausalDiagram,
    base: CausalDiagram,
}

impl SelectionDiagram {
    pub fn new(diagram: CausalDiagram) -> Result<Self, GraphError> {
        for s in diagram.selection_nodes() {
            let name = diagram.name(s).to_string();
            if !diagram.parents(s).is_empty() {
                return Err(GraphError::MalformedDecl { line: 0, msg: format!("selection node `{name}` has parents") });
            }
            let ch = diagram.children(s);
            if ch.len() != 1 || diagram.kind(*ch.iter().next().unwrap()) == NodeKind::Selection {
                return Err(GraphError::MalformedDecl {
                    line: 0,
                    msg: format!("selection node `{name}` must point at exactly one variable"),
                });
            }
            if diagram.bidirected_edges().iter().any(|&(a, b)| a == s || b == s) {
                return Err(GraphError::MalformedDecl { line: 0, msg: format!("selection node `{name}` is confounded") });
            }
        }
        let keep: VarSet = diagram.ids().filter(|&v| diagram.kind(v) != NodeKind::Selection).collect();
        let base = diagram.induced(&keep);
        Ok(SelectionDiagram { diagram, base })
    }

    /// The full diagram including selection nodes.
    pub fn diagram(&self) -> &CausalDiagram {
        &self.diagram
    }

    /// The shared causal structure without selection nodes.
    pub fn base(&self) -> &CausalDiagram {
        &self.base
    }

    /// Variables (ids in `diagram()`) that some selection node points at.
    pub fn targets(&self) -> VarSet {
        self.diagram.selection_nodes().iter().flat_map(|&s| self.diagram.children(s).iter().copied()).collect()
    }

    pub fn selection_nodes(&self) -> VarSet {
        self.diagram.selection_nodes()
    }

    /// `(selection node, target)` name pairs.
    pub fn selection_edges(&self) -> Vec<(String, String)> {
        self.selection_nodes()
            .into_iter()
            .map(|s| {
                let t: NodeId = *self.diagram.children(s).iter().next().unwrap();
                (self.diagram.name(s).to_string(), self.diagram.name(t).to_string())
            })
            .collect()
    }
}

/// Adds one fresh selection node `S1`, `S2`, ... per target.
pub fn attach_selection(base: &CausalDiagram, targets: &VarSet) -> Result<SelectionDiagram, GraphError> {
    base.check_known(targets)?;
    let mut b = DiagramBuilder::new();
    for v in base.ids() {
        b.node(base.name(v), base.kind(v), 0)?;
    }
    for (p, c) in base.directed_edges() {
        b.edge(base.name(p), base.name(c), 0)?;
    }
    for &(x, y) in base.bidirected_edges() {
        b.bidirected(base.name(x), base.name(y), 0)?;
    }
    let mut k = 0;
    for &t in targets {
        let name = loop {
            k += 1;
            let candidate = format!("S{k}");
            if base.try_id(&candidate).is_none() {
                break candidate;
            }
        };
        b.selection(&name, base.name(t), 0)?;
    }
    SelectionDiagram::new(b.build()?)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Regime {
    Observational,
    Randomized(VarSet),
}

/// One study: its selection diagram against the shared target, how it was
/// run, and what it measured. Node ids refer to the shared target diagram.
#[derive(Debug, Clone)]
pub struct StudyDescriptor {
    pub label: String,
    pub diagram: SelectionDiagram,
    pub regime: Regime,
    pub measured: VarSet,
}

impl StudyDescriptor {
    pub fn new(label: &str, diagram: SelectionDiagram, regime: Regime, measured: VarSet) -> Result<Self, GraphError> {
        let base = diagram.base();
        for &v in &measured {
            if v.0 >= base.len() || base.kind(v) != NodeKind::Observed {
                return Err(GraphError::MalformedDecl { line: 0, msg: format!("study `{label}` measures a non-variable") });
            }
        }
        if let Regime::Randomized(x) = &regime {
            if !x.is_subset(&measured) {
                return Err(GraphError::MalformedDecl {
                    line: 0,
                    msg: format!("study `{label}` randomizes an unmeasured variable"),
                });
            }
        }
        Ok(StudyDescriptor { label: label.to_string(), diagram, regime, measured })
    }
}
