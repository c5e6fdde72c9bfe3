//! JSON document for a model.
//!
//! ```json
//! {"nodes": [
//!   {"name": "X", "kind": "observed", "card": 2, "parents": [],
//!    "exo": [0.25, 0.75], "table": [[0, 1]]},
//!   {"name": "Y", "kind": "observed", "card": 2, "parents": ["X"],
//!    "exo": [0.5, 0.5], "table": [[0, 1], [1, 0]]}
//! ]}
//! ```
//!
//! One `table` row per parent configuration (parents in listed order, last
//! one fastest), one entry per exogenous value. Exact models write
//! probabilities as `"p/q"` strings.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::{DiscreteScm, ScmError};
use crate::graph::{DiagramBuilder, GraphError, NodeKind};
use crate::scalar::Prob;

#[derive(Debug, Error)]
pub enum ScmFileError {
    #[error("malformed model document: {0}")]
    Json(#[from] serde_json::Error),
    #[error("node `{node}`: {msg}")]
    Node { node: String, msg: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Model(#[from] ScmError),
}

#[derive(Serialize, Deserialize)]
struct NodeDoc {
    name: String,
    kind: String,
    card: u32,
    parents: Vec<String>,
    exo: Vec<Value>,
    table: Vec<Vec<u32>>,
}

#[derive(Serialize, Deserialize)]
struct ScmDoc {
    nodes: Vec<NodeDoc>,
}

impl<T: Prob> DiscreteScm<T> {
    pub fn to_json(&self) -> String {
        let d = self.diagram();
        let nodes = d
            .ids()
            .map(|v| {
                let ucard = self.exo(v).len();
                NodeDoc {
                    name: d.name(v).to_string(),
                    kind: if d.kind(v) == NodeKind::Latent { "latent" } else { "observed" }.to_string(),
                    card: self.cards()[v.0],
                    parents: d.names_of(d.parents(v)),
                    exo: self.exo(v).iter().map(Prob::to_json).collect(),
                    table: self.table(v).chunks(ucard).map(<[u32]>::to_vec).collect(),
                }
            })
            .collect();
        serde_json::to_string_pretty(&ScmDoc { nodes }).expect("serializable")
    }

    /// Parses a model document. Parents must be declared before children.
    pub fn from_json(src: &str) -> Result<Self, ScmFileError> {
        let doc: ScmDoc = serde_json::from_str(src)?;
        let mut b = DiagramBuilder::new();
        for (i, n) in doc.nodes.iter().enumerate() {
            let kind = match n.kind.as_str() {
                "observed" => NodeKind::Observed,
                "latent" => NodeKind::Latent,
                other => return Err(ScmFileError::Node { node: n.name.clone(), msg: format!("unknown kind `{other}`") }),
            };
            b.node(&n.name, kind, i + 1)?;
        }
        for (i, n) in doc.nodes.iter().enumerate() {
            for p in &n.parents {
                b.edge(p, &n.name, i + 1)?;
            }
        }
        let diagram = b.build()?;
        let mut card = Vec::new();
        let mut exo = Vec::new();
        let mut table = Vec::new();
        for n in &doc.nodes {
            // the diagram stores parents in id order; the document may not
            let v = diagram.id(&n.name)?;
            let declared: Vec<usize> = n.parents.iter().map(|p| diagram.id(p).map(|x| x.0)).collect::<Result<_, _>>()?;
            let mut sorted = declared.clone();
            sorted.sort();
            if declared != sorted || diagram.parents(v).len() != declared.len() {
                return Err(ScmFileError::Node { node: n.name.clone(), msg: "parents must be listed once each, in declaration order".into() });
            }
            card.push(n.card);
            let probs = n
                .exo
                .iter()
                .map(|x| T::from_json(x).ok_or_else(|| ScmFileError::Node { node: n.name.clone(), msg: format!("bad probability {x}") }))
                .collect::<Result<Vec<T>, _>>()?;
            if n.table.iter().any(|row| row.len() != probs.len()) {
                return Err(ScmFileError::Node { node: n.name.clone(), msg: "table row width differs from exogenous size".into() });
            }
            exo.push(probs);
            table.push(n.table.concat());
        }
        Ok(DiscreteScm::from_parts(diagram, card, exo, table)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_graph;
    use crate::oracle::random_scm;
    use num_rational::BigRational;

    #[test]
    fn float_round_trip_is_bit_exact() {
        let d = parse_graph("nodes: W, X, M, Y\nW -> X\nX -> M\nM -> Y\nW -> Y\nX <-> Y").unwrap().into_diagram();
        let m = random_scm::<f64>(&d, 5);
        let text = m.to_json();
        let back = DiscreteScm::<f64>::from_json(&text).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), text);
    }

    #[test]
    fn rational_round_trip() {
        let d = parse_graph("nodes: X, Y\nX -> Y").unwrap().into_diagram();
        let m = random_scm::<BigRational>(&d, 5);
        assert_eq!(DiscreteScm::<BigRational>::from_json(&m.to_json()).unwrap(), m);
    }

    #[test]
    fn rejects_partial_tables() {
        let src = r#"{"nodes": [{"name": "X", "kind": "observed", "card": 2, "parents": [], "exo": [0.5, 0.5], "table": [[0]]}]}"#;
        assert!(DiscreteScm::<f64>::from_json(src).is_err());
        let src = r#"{"nodes": [{"name": "X", "kind": "observed", "card": 2, "parents": [], "exo": [0.5, 0.6], "table": [[0, 1]]}]}"#;
        assert!(DiscreteScm::<f64>::from_json(src).is_err());
    }
}
