//! Line-oriented graph DSL and the study-corpus format built on it.
//!
//! ```text
//! # comment
//! nodes: X, Z, Y
//! latent: U
//! X -> Y
//! Z <-> Y
//! S1 ~> Z
//! study h { select: W; regime: randomized(X); measured: X, W, Y }
//! ```
//!
//! Statements end at a newline or `;`. Study blocks may span lines.

use thiserror::Error;

use crate::graph::{valid_token, CausalDiagram, DiagramBuilder, GraphError, NodeKind, VarSet};
use crate::transport::{attach_selection, Regime, SelectionDiagram, StudyDescriptor};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum DslError {
    #[error("line {line}, column {col}: {msg}")]
    Parse { line: usize, col: usize, msg: String },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

fn perr(line: usize, col: usize, msg: impl Into<String>) -> DslError {
    DslError::Parse { line, col, msg: msg.into() }
}

#[derive(Debug, Clone)]
pub enum ParsedGraph {
    Causal(CausalDiagram),
    Selection(SelectionDiagram),
}

impl ParsedGraph {
    pub fn into_diagram(self) -> CausalDiagram {
        match self {
            ParsedGraph::Causal(d) => d,
            ParsedGraph::Selection(s) => s.diagram().clone(),
        }
    }

    pub fn diagram(&self) -> &CausalDiagram {
        match self {
            ParsedGraph::Causal(d) => d,
            ParsedGraph::Selection(s) => s.diagram(),
        }
    }

    pub fn into_selection(self) -> SelectionDiagram {
        match self {
            ParsedGraph::Causal(d) => SelectionDiagram::new(d).expect("no selection nodes"),
            ParsedGraph::Selection(s) => s,
        }
    }
}

/// One statement with its 1-based line and the column where it starts.
#[derive(Debug)]
struct Stmt<'a> {
    text: &'a str,
    line: usize,
    col: usize,
}

fn statements(src: &str) -> Vec<Stmt<'_>> {
    let mut out = Vec::new();
    for (i, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let mut offset = 0;
        for piece in line.split(';') {
            let trimmed = piece.trim();
            if !trimmed.is_empty() {
                let lead = piece.len() - piece.trim_start().len();
                out.push(Stmt { text: trimmed, line: i + 1, col: offset + lead + 1 });
            }
            offset += piece.len() + 1;
        }
    }
    out
}

fn name_list(s: &str, line: usize, col: usize) -> Result<Vec<String>, DslError> {
    let s = s.trim();
    if s.is_empty() || s == "none" {
        return Ok(Vec::new());
    }
    s.split(',')
        .map(|t| {
            let t = t.trim();
            if valid_token(t) {
                Ok(t.to_string())
            } else {
                Err(perr(line, col, format!("invalid name `{t}`")))
            }
        })
        .collect()
}

fn apply_stmt(b: &mut DiagramBuilder, st: &Stmt<'_>) -> Result<(), DslError> {
    let t = st.text;
    if let Some(rest) = t.strip_prefix("nodes:") {
        for n in name_list(rest, st.line, st.col)? {
            b.node(&n, NodeKind::Observed, st.line)?;
        }
        return Ok(());
    }
    if let Some(rest) = t.strip_prefix("latent:") {
        for n in name_list(rest, st.line, st.col)? {
            b.node(&n, NodeKind::Latent, st.line)?;
        }
        return Ok(());
    }
    for (op, kind) in [("<->", 1), ("~>", 2), ("->", 0)] {
        if let Some(pos) = t.find(op) {
            let lhs = t[..pos].trim();
            let rhs = t[pos + op.len()..].trim();
            if lhs.is_empty() || !valid_token(lhs) {
                return Err(perr(st.line, st.col, format!("expected a node name before `{op}`")));
            }
            if rhs.is_empty() || !valid_token(rhs) {
                return Err(perr(st.line, st.col + pos, format!("expected a node name after `{op}`")));
            }
            match kind {
                0 => b.edge(lhs, rhs, st.line)?,
                1 => b.bidirected(lhs, rhs, st.line)?,
                _ => b.selection(lhs, rhs, st.line)?,
            }
            return Ok(());
        }
    }
    Err(perr(st.line, st.col, format!("unrecognised statement `{t}`")))
}

/// Parses a graph document. Any `~>` edge makes it a selection diagram.
pub fn parse_graph(src: &str) -> Result<ParsedGraph, DslError> {
    let mut b = DiagramBuilder::new();
    for st in statements(src) {
        apply_stmt(&mut b, &st)?;
    }
    let d = b.build()?;
    if d.selection_nodes().is_empty() {
        Ok(ParsedGraph::Causal(d))
    } else {
        Ok(ParsedGraph::Selection(SelectionDiagram::new(d)?))
    }
}

/// Shared target graph plus per-study blocks.
#[derive(Debug, Clone)]
pub struct StudyCorpus {
    pub target: CausalDiagram,
    pub studies: Vec<StudyDescriptor>,
}

impl StudyCorpus {
    pub fn study(&self, label: &str) -> Option<&StudyDescriptor> {
        self.studies.iter().find(|s| s.label == label)
    }

    /// The named studies, in the order given.
    pub fn select(&self, labels: &[&str]) -> Vec<StudyDescriptor> {
        labels.iter().filter_map(|l| self.study(l).cloned()).collect()
    }
}

pub fn parse_corpus(src: &str) -> Result<StudyCorpus, DslError> {
    // split the source into the graph part and raw study blocks
    let mut graph_src = String::new();
    let mut blocks: Vec<(String, usize, String)> = Vec::new();
    let mut current: Option<(String, usize, String)> = None;
    for (i, raw) in src.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("");
        let mut rest = line;
        loop {
            if let Some((label, at, body)) = current.as_mut() {
                match rest.find('}') {
                    Some(pos) => {
                        body.push_str(&rest[..pos]);
                        blocks.push((label.clone(), *at, std::mem::take(body)));
                        current = None;
                        rest = &rest[pos + 1..];
                        continue;
                    }
                    None => {
                        body.push_str(rest);
                        body.push('\n');
                        break;
                    }
                }
            }
            let trimmed = rest.trim_start();
            if let Some(after) = trimmed.strip_prefix("study") {
                let open = after
                    .find('{')
                    .ok_or_else(|| perr(i + 1, 1, "expected `{` after study label"))?;
                let label = after[..open].trim();
                if !valid_token(label) {
                    return Err(perr(i + 1, 1, format!("invalid study label `{label}`")));
                }
                current = Some((label.to_string(), i + 1, String::new()));
                rest = &after[open + 1..];
                continue;
            }
            graph_src.push_str(rest);
            break;
        }
        // keep graph line numbers aligned with the source
        graph_src.push('\n');
    }
    if let Some((label, at, _)) = current {
        return Err(perr(at, 1, format!("study `{label}` is missing its closing `}}`")));
    }
    let target = match parse_graph(&graph_src)? {
        ParsedGraph::Causal(d) => d,
        ParsedGraph::Selection(_) => {
            return Err(perr(1, 1, "the shared graph must not carry selection edges; use study blocks"))
        }
    };
    let mut studies = Vec::new();
    for (label, line, body) in blocks {
        let mut select = Vec::new();
        let mut regime = Regime::Observational;
        let mut measured: Option<Vec<String>> = None;
        for st in statements(&body) {
            let (key, value) = st
                .text
                .split_once(':')
                .ok_or_else(|| perr(line, st.col, format!("expected `key: value` in study `{label}`")))?;
            match key.trim() {
                "select" => select = name_list(value, line, st.col)?,
                "measured" => measured = Some(name_list(value, line, st.col)?),
                "regime" => {
                    let v = value.trim();
                    regime = if v == "observational" {
                        Regime::Observational
                    } else if let Some(inner) = v.strip_prefix("randomized(").and_then(|r| r.strip_suffix(')')) {
                        Regime::Randomized(target.set(&name_list(inner, line, st.col)?)?)
                    } else {
                        return Err(perr(line, st.col, format!("unknown regime `{v}`")));
                    };
                }
                other => return Err(perr(line, st.col, format!("unknown study field `{other}`"))),
            }
        }
        if studies.iter().any(|s: &StudyDescriptor| s.label == label) {
            return Err(perr(line, 1, format!("duplicate study `{label}`")));
        }
        let targets = target.set(&select)?;
        let measured: VarSet = match measured {
            Some(m) => target.set(&m)?,
            None => target.observed(),
        };
        let diagram = attach_selection(&target, &targets)?;
        studies.push(StudyDescriptor::new(&label, diagram, regime, measured)?);
    }
    Ok(StudyCorpus { target, studies })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fig1a_parses() {
        let d = parse_graph("# unconfounded mediation\nnodes: X, M, Y\nX -> M\nM -> Y\nX -> Y\n").unwrap().into_diagram();
        assert_eq!(d.len(), 3);
    }

    #[test]
    fn selection_edge_makes_selection_diagram() {
        let p = parse_graph("nodes: X, Z, Y\nZ -> X\nZ -> Y\nX -> Y\nS1 ~> Z").unwrap();
        let ParsedGraph::Selection(sd) = p else { panic!("expected a selection diagram") };
        assert_eq!(sd.diagram().selection_nodes().len(), 1);
        assert_eq!(sd.base().len(), 3);
    }

    #[test]
    fn dangling_arrow_is_located() {
        let err = parse_graph("nodes: A, B\nA -> ").unwrap_err();
        match err {
            DslError::Parse { line, col, .. } => assert_eq!((line, col), (2, 3)),
            other => panic!("{other:?}"),
        }
        let err = parse_graph("nodes: A, B\nA ->").unwrap_err();
        assert!(err.to_string().starts_with("line 2, column 3"));
    }

    #[test]
    fn unknown_statement() {
        assert!(matches!(parse_graph("nodes: A\nwhat"), Err(DslError::Parse { line: 2, .. })));
    }

    #[test]
    fn corpus_blocks() {
        let src = "nodes: Z, X, W, Y\nZ -> X\nZ -> Y\nX -> W\nW -> Y\n\
                   study h { select: W; regime: randomized(X); measured: X, W, Y }\n\
                   study c {\n  select: Z\n  measured: X, Z, Y\n}\n";
        let corpus = parse_corpus(src).unwrap();
        assert_eq!(corpus.studies.len(), 2);
        let h = corpus.study("h").unwrap();
        assert!(matches!(h.regime, Regime::Randomized(_)));
        assert_eq!(h.diagram.targets().len(), 1);
        let c = corpus.study("c").unwrap();
        assert_eq!(c.regime, Regime::Observational);
        assert_eq!(c.measured.len(), 3);
    }

    #[test]
    fn corpus_errors() {
        assert!(parse_corpus("nodes: X\nstudy a { select: X").is_err());
        assert!(parse_corpus("nodes: X\nstudy a { colour: red }").is_err());
        assert!(parse_corpus("nodes: X\nstudy a { select: Q }").is_err());
    }
}
