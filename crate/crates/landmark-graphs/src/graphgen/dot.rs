//! Graphviz DOT export. Decision points render as circles `n_t`,
//! landmarks as boxes with their surface text; action edges are directed
//! and labeled, nearness edges undirected in style.

use super::LandmarkGraph;
use std::fmt::Write;

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('"', "\\\"")
}

/// Deterministic DOT text for a graph.
pub fn to_dot(graph: &LandmarkGraph) -> String {
    let mut out = String::from("digraph landmark_graph {\n");
    out.push_str("  rankdir=LR;\n");
    for t in 0..graph.decision_count() {
        writeln!(out, "  d{t} [shape=circle, label=\"n_{t}\"];").unwrap();
    }
    for (i, landmark) in graph.landmarks().iter().enumerate() {
        writeln!(
            out,
            "  l{i} [shape=box, label=\"{}\"];",
            escape(&landmark.join(" "))
        )
        .unwrap();
    }
    for (from, action, to) in graph.action_edges() {
        writeln!(out, "  d{from} -> d{to} [label=\"{action}\"];").unwrap();
    }
    for (lm, decision) in graph.nearness_edges() {
        writeln!(out, "  l{lm} -> d{decision} [dir=none, style=dashed];").unwrap();
    }
    out.push_str("}\n");
    out
}
