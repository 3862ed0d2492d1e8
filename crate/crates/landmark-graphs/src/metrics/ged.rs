//! Exact graph edit distance between landmark graphs, by best-first
//! search over node assignments with an admissible lower bound. Edge
//! operations are induced by the node assignment.

use super::jaccard_tokens;
use crate::corpus::Action;
use crate::graphgen::LandmarkGraph;
use std::cmp::Ordering;
use std::collections::{BinaryHeap, HashMap};
use thiserror::Error;

pub const DEFAULT_GED_NODE_LIMIT: usize = 30;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error(
        "graphs too large for exact edit distance: {nodes} combined nodes exceeds the limit of \
         {limit}; raise the limit flag if this is intentional"
    )]
    TooLarge { nodes: usize, limit: usize },
}

/// Edit costs. Insertions and deletions cost 1 for both nodes and edges.
/// Node substitution is free between decision points and between landmarks
/// with identical token sequences, otherwise 1; the relaxed variant
/// charges landmark-landmark substitutions 1 - Jaccard over their token
/// sets. Edge substitution is free when labels agree (or both edges are
/// nearness edges), otherwise 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct EditCostModel {
    pub relaxed: bool,
}

impl EditCostModel {
    pub fn strict() -> EditCostModel {
        EditCostModel { relaxed: false }
    }

    pub fn relaxed() -> EditCostModel {
        EditCostModel { relaxed: true }
    }

    fn node_sub(&self, a: &NodeAttr, b: &NodeAttr) -> f64 {
        match (a, b) {
            (NodeAttr::Decision, NodeAttr::Decision) => 0.0,
            (NodeAttr::Landmark(x), NodeAttr::Landmark(y)) => {
                if x == y {
                    0.0
                } else if self.relaxed {
                    1.0 - jaccard_tokens(x, y)
                } else {
                    1.0
                }
            }
            _ => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum NodeAttr {
    Decision,
    Landmark(Vec<String>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum EdgeAttr {
    /// Directed action edge; `from` is the source node id.
    Action { label: Action, from: usize },
    Nearness,
}

/// Flat node/edge view of a [`LandmarkGraph`] for the search. Node ids:
/// decision points first, then landmarks. At most one edge exists between
/// any node pair by construction.
struct GedGraph {
    nodes: Vec<NodeAttr>,
    edges: Vec<(usize, usize, EdgeAttr)>,
    by_pair: HashMap<(usize, usize), EdgeAttr>,
    adjacency: Vec<Vec<(usize, EdgeAttr)>>,
}

impl GedGraph {
    fn from(graph: &LandmarkGraph) -> GedGraph {
        let d = graph.decision_count();
        let mut nodes: Vec<NodeAttr> = vec![NodeAttr::Decision; d];
        for lm in graph.landmarks() {
            nodes.push(NodeAttr::Landmark(lm.clone()));
        }
        let mut edges = Vec::new();
        for &(from, action, to) in graph.action_edges() {
            edges.push((
                from.min(to),
                from.max(to),
                EdgeAttr::Action {
                    label: action,
                    from,
                },
            ));
        }
        for &(lm, decision) in graph.nearness_edges() {
            let a = d + lm;
            let b = decision;
            edges.push((a.min(b), a.max(b), EdgeAttr::Nearness));
        }
        let mut by_pair = HashMap::new();
        let mut adjacency = vec![Vec::new(); nodes.len()];
        for &(a, b, attr) in &edges {
            by_pair.insert((a, b), attr);
            adjacency[a].push((b, attr));
            adjacency[b].push((a, attr));
        }
        GedGraph {
            nodes,
            edges,
            by_pair,
            adjacency,
        }
    }

    fn edge_between(&self, a: usize, b: usize) -> Option<EdgeAttr> {
        self.by_pair.get(&(a.min(b), a.max(b))).copied()
    }
}

/// Substitution cost between two edges whose endpoints correspond under
/// the mapping `from1 -> from2` of their source-node images.
fn edge_sub(e1: EdgeAttr, e2: EdgeAttr, from1_image: Option<usize>) -> f64 {
    match (e1, e2) {
        (EdgeAttr::Nearness, EdgeAttr::Nearness) => 0.0,
        (EdgeAttr::Action { label: l1, .. }, EdgeAttr::Action { label: l2, from: f2 })
            if l1 == l2 && from1_image == Some(f2) =>
        {
            0.0
        }
        _ => 1.0,
    }
}

#[derive(Debug)]
struct SearchState {
    f: f64,
    g: f64,
    depth: usize,
    used: u64,
    mapping: Vec<Option<usize>>,
}

impl PartialEq for SearchState {
    fn eq(&self, other: &Self) -> bool {
        self.f == other.f
    }
}
impl Eq for SearchState {}
impl PartialOrd for SearchState {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for SearchState {
    fn cmp(&self, other: &Self) -> Ordering {
        // Reverse: BinaryHeap is a max-heap, we want the smallest f first.
        other.f.total_cmp(&self.f)
    }
}

/// Exact minimum-cost edit path between two landmark graphs.
pub fn ged(
    pred: &LandmarkGraph,
    gold: &LandmarkGraph,
    costs: &EditCostModel,
) -> Result<f64, MetricsError> {
    ged_with_limit(pred, gold, costs, DEFAULT_GED_NODE_LIMIT)
}

pub fn ged_with_limit(
    pred: &LandmarkGraph,
    gold: &LandmarkGraph,
    costs: &EditCostModel,
    node_limit: usize,
) -> Result<f64, MetricsError> {
    let combined = pred.node_count() + gold.node_count();
    if combined > node_limit {
        return Err(MetricsError::TooLarge {
            nodes: combined,
            limit: node_limit,
        });
    }
    let g1 = GedGraph::from(pred);
    let g2 = GedGraph::from(gold);
    Ok(astar(&g1, &g2, costs))
}

fn astar(g1: &GedGraph, g2: &GedGraph, costs: &EditCostModel) -> f64 {
    let n1 = g1.nodes.len();
    let n2 = g2.nodes.len();

    // Pure best-first search. States with equal (depth, used) masks are
    // NOT interchangeable (the bijection determines future edge costs),
    // so no dominance pruning applies; the admissible heuristic alone
    // keeps the frontier small at landmark-graph sizes.
    let mut heap = BinaryHeap::new();
    let start = SearchState {
        f: heuristic(g1, g2, 0, 0, 0),
        g: 0.0,
        depth: 0,
        used: 0,
        mapping: Vec::new(),
    };
    heap.push(start);

    while let Some(state) = heap.pop() {
        if state.depth == n1 {
            // All g1 nodes decided; the rest of g2 is pure insertion and
            // was already added when the state was created.
            return state.g;
        }
        let k = state.depth;

        // Option 1: map node k to every unused g2 node.
        for v in 0..n2 {
            if state.used & (1 << v) != 0 {
                continue;
            }
            let mut delta = costs.node_sub(&g1.nodes[k], &g2.nodes[v]);
            delta += edge_delta_mapped(g1, g2, &state.mapping, k, v);
            push_successor(&mut heap, g1, g2, &state, Some(v), delta);
        }
        // Option 2: delete node k.
        let mut delta = 1.0;
        for &(j, _) in &g1.adjacency[k] {
            if j < k {
                delta += 1.0; // incident edge must be deleted too
            }
        }
        push_successor(&mut heap, g1, g2, &state, None, delta);
    }
    unreachable!("search space exhausted without reaching a terminal state")
}

/// Edge cost incurred by mapping g1 node `k` onto g2 node `v`, considering
/// only edges whose other endpoint is already decided.
fn edge_delta_mapped(
    g1: &GedGraph,
    g2: &GedGraph,
    mapping: &[Option<usize>],
    k: usize,
    v: usize,
) -> f64 {
    let mut delta = 0.0;
    for (j, decided) in mapping.iter().enumerate() {
        let e1 = g1.edge_between(k, j);
        match decided {
            Some(w) => {
                let e2 = g2.edge_between(v, *w);
                match (e1, e2) {
                    (Some(a), Some(b)) => {
                        let from1_image = action_from_image(a, k, j, v, *w, mapping);
                        delta += edge_sub(a, b, from1_image);
                    }
                    (Some(_), None) | (None, Some(_)) => delta += 1.0,
                    (None, None) => {}
                }
            }
            None => {
                if e1.is_some() {
                    delta += 1.0;
                }
            }
        }
    }
    delta
}

/// Image of a directed g1 action edge's source under the mapping extended
/// with k -> v.
fn action_from_image(
    e1: EdgeAttr,
    k: usize,
    j: usize,
    v: usize,
    w: usize,
    mapping: &[Option<usize>],
) -> Option<usize> {
    match e1 {
        EdgeAttr::Action { from, .. } => {
            if from == k {
                Some(v)
            } else if from == j {
                mapping[j].or(Some(w))
            } else {
                None
            }
        }
        EdgeAttr::Nearness => None,
    }
}

fn push_successor(
    heap: &mut BinaryHeap<SearchState>,
    g1: &GedGraph,
    g2: &GedGraph,
    state: &SearchState,
    assign: Option<usize>,
    delta: f64,
) {
    let depth = state.depth + 1;
    let used = match assign {
        Some(v) => state.used | (1 << v),
        None => state.used,
    };
    let mut g = state.g + delta;
    let mut mapping = state.mapping.clone();
    mapping.push(assign);

    if depth == g1.nodes.len() {
        // Terminal: insert every unused g2 node and every g2 edge with at
        // least one unused endpoint.
        let mut remaining = 0.0;
        for v in 0..g2.nodes.len() {
            if used & (1 << v) == 0 {
                remaining += 1.0;
            }
        }
        for &(a, b, _) in &g2.edges {
            if used & (1 << a) == 0 || used & (1 << b) == 0 {
                remaining += 1.0;
            }
        }
        g += remaining;
    }

    let h = if depth == g1.nodes.len() {
        0.0
    } else {
        heuristic(g1, g2, depth, used.count_ones() as usize, used)
    };
    heap.push(SearchState {
        f: g + h,
        g,
        depth,
        used,
        mapping,
    });
}

/// Admissible lower bound on the remaining cost: surplus nodes must be
/// inserted or deleted, and so must surplus not-yet-accounted edges.
fn heuristic(g1: &GedGraph, g2: &GedGraph, depth: usize, used_count: usize, used: u64) -> f64 {
    let r1 = g1.nodes.len() - depth;
    let r2 = g2.nodes.len() - used_count;
    let node_term = r1.abs_diff(r2) as f64;
    let e1_rem = g1
        .edges
        .iter()
        .filter(|(a, b, _)| *a >= depth || *b >= depth)
        .count();
    let e2_rem = g2
        .edges
        .iter()
        .filter(|(a, b, _)| used & (1 << *a) == 0 || used & (1 << *b) == 0)
        .count();
    node_term + e1_rem.abs_diff(e2_rem) as f64
}

/// Graph similarity per the normalized edit distance:
/// `1 - ged / (|pred| + |gold|)`. Two empty graphs score 1. The relaxed
/// flag selects the 1 - Jaccard landmark substitution cost.
pub fn graph_similarity(
    pred: &LandmarkGraph,
    gold: &LandmarkGraph,
    relaxed: bool,
) -> Result<f64, MetricsError> {
    graph_similarity_with_limit(pred, gold, relaxed, DEFAULT_GED_NODE_LIMIT)
}

pub fn graph_similarity_with_limit(
    pred: &LandmarkGraph,
    gold: &LandmarkGraph,
    relaxed: bool,
    node_limit: usize,
) -> Result<f64, MetricsError> {
    let total = (pred.size() + gold.size()) as f64;
    if total == 0.0 {
        return Ok(1.0);
    }
    let costs = EditCostModel { relaxed };
    let distance = ged_with_limit(pred, gold, &costs, node_limit)?;
    Ok(1.0 - distance / total)
}
