//! Built-in example diagrams.

use crate::dsl::{parse_graph, ParsedGraph};

macro_rules! fixtures {
    ($($name:literal),* $(,)?) => {
        /// `(name, source)` for every built-in diagram.
        pub const FIXTURES: &[(&str, &str)] = &[$(($name, include_str!(concat!("../fixtures/", $name, ".cg")))),*];
    };
}

fixtures!(
    "fig1a", "fig1b", "fig2", "fig3", "fig4", "fig5", "fig6", "fig7a", "fig7b", "fig7b_ux", "fig7c", "fig8", "bow", "bow_m", "chain",
    "collider",
);

pub fn source(name: &str) -> Option<&'static str> {
    FIXTURES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

/// Parses a built-in diagram; study blocks, if any, are ignored.
pub fn load(name: &str) -> Option<ParsedGraph> {
    let src = source(name)?;
    let graph: String = src.lines().take_while(|l| !l.trim_start().starts_with("study")).collect::<Vec<_>>().join("\n");
    Some(parse_graph(&graph).expect("built-in fixtures parse"))
}
