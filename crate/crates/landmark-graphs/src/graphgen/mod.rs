//! Landmark-graph construction from (actions, states) pairs, route-level
//! stitching, and DOT export.

mod dot;

pub use dot::to_dot;

use crate::corpus::{Action, ActionSeq, CorpusError, StateSeq};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("actions and states differ in length: {actions} vs {states}")]
    LengthMismatch { actions: usize, states: usize },
    #[error("cannot stitch an empty route")]
    EmptyRoute,
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

/// A landmark text span: its surface tokens plus where it came from.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LandmarkSpan {
    pub tokens: Vec<String>,
    pub sentence_id: u32,
    /// 0-based step (decision point index) the span was predicted for.
    pub step: usize,
    pub start: usize,
    /// Exclusive end token index.
    pub end: usize,
}

impl LandmarkSpan {
    pub fn surface(&self) -> String {
        self.tokens.join(" ")
    }
}

/// A landmark graph: a single directed path of decision points with
/// action-labeled edges, plus landmark nodes attached to decision points
/// by unlabeled nearness edges. Landmark identity is exact token-sequence
/// equality, case sensitive.
#[derive(Debug, Clone, PartialEq)]
pub struct LandmarkGraph {
    /// Number of decision points n_0..n_{k-1} along the path.
    decision_count: usize,
    /// Landmark surface token sequences, in insertion order.
    landmarks: Vec<Vec<String>>,
    /// (from decision, action, to decision); to == from + 1 by construction.
    action_edges: Vec<(usize, Action, usize)>,
    /// (landmark index, decision index), deduplicated.
    nearness_edges: Vec<(usize, usize)>,
}

impl LandmarkGraph {
    /// A graph with only the root decision point.
    pub fn root_only() -> LandmarkGraph {
        LandmarkGraph {
            decision_count: 1,
            landmarks: Vec::new(),
            action_edges: Vec::new(),
            nearness_edges: Vec::new(),
        }
    }

    pub fn decision_count(&self) -> usize {
        self.decision_count
    }

    pub fn landmarks(&self) -> &[Vec<String>] {
        &self.landmarks
    }

    pub fn action_edges(&self) -> &[(usize, Action, usize)] {
        &self.action_edges
    }

    pub fn nearness_edges(&self) -> &[(usize, usize)] {
        &self.nearness_edges
    }

    pub fn node_count(&self) -> usize {
        self.decision_count + self.landmarks.len()
    }

    pub fn edge_count(&self) -> usize {
        self.action_edges.len() + self.nearness_edges.len()
    }

    /// |g|: node count plus edge count.
    pub fn size(&self) -> usize {
        self.node_count() + self.edge_count()
    }

    fn landmark_index(&mut self, tokens: &[String]) -> usize {
        if let Some(i) = self.landmarks.iter().position(|l| l == tokens) {
            return i;
        }
        self.landmarks.push(tokens.to_vec());
        self.landmarks.len() - 1
    }

    fn add_nearness(&mut self, landmark: usize, decision: usize) {
        if !self.nearness_edges.contains(&(landmark, decision)) {
            self.nearness_edges.push((landmark, decision));
        }
    }
}

/// Group a state vector's set bits into maximal runs of consecutive
/// positions.
pub fn spans_of_state(state: &[u8]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, &bit) in state.iter().enumerate() {
        match (bit, start) {
            (1, None) => start = Some(i),
            (0, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, state.len()));
    }
    spans
}

/// Build a sentence-level graph: a root decision point, one new decision
/// point plus a labeled edge per non-STOP action, and for each landmark
/// span in the step's state a landmark node (created only if its exact
/// token sequence is absent) with a nearness edge. STOP terminates the
/// walk and contributes nothing.
pub fn build_graph(
    actions: &ActionSeq,
    states: &StateSeq,
    tokens: &[String],
) -> Result<LandmarkGraph, GraphError> {
    if actions.len() != states.len() {
        return Err(GraphError::LengthMismatch {
            actions: actions.len(),
            states: states.len(),
        });
    }
    let mut graph = LandmarkGraph::root_only();
    for (t, (&action, state)) in actions.actions().iter().zip(states.states()).enumerate() {
        if action == Action::Stop {
            break;
        }
        let node = graph.decision_count;
        graph.decision_count += 1;
        graph.action_edges.push((node - 1, action, node));
        for (start, end) in spans_of_state(state) {
            let span_tokens: Vec<String> = tokens[start..end].to_vec();
            let lm = graph.landmark_index(&span_tokens);
            graph.add_nearness(lm, node);
        }
        let _ = t;
    }
    Ok(graph)
}

/// Like [`build_graph`], but first pads (or trims) the state rows to the
/// action count. Prediction records keep state rows only for the steps
/// they kept, so the row counts can differ.
pub fn build_graph_padded(
    actions: &ActionSeq,
    states: &StateSeq,
    tokens: &[String],
) -> Result<LandmarkGraph, GraphError> {
    let mut rows = states.states().to_vec();
    rows.resize(actions.len(), vec![0; tokens.len()]);
    let states = StateSeq::new(rows)?;
    build_graph(actions, &states, tokens)
}

/// Stitch sentence-level graphs into a route graph: each graph's root is
/// merged into the previous graph's final decision point, a leading
/// `stand` on a non-first sentence becomes `move`, and landmark identity
/// is re-deduplicated across the whole route.
pub fn stitch_route(sentence_graphs: &[LandmarkGraph]) -> Result<LandmarkGraph, GraphError> {
    let mut iter = sentence_graphs.iter();
    let first = iter.next().ok_or(GraphError::EmptyRoute)?;
    let mut route = first.clone();
    for graph in iter {
        // The incoming root is identified with our current final node.
        let offset = route.decision_count - 1;
        route.decision_count += graph.decision_count - 1;
        for (i, (from, action, to)) in graph.action_edges.iter().enumerate() {
            let action = if i == 0 && *action == Action::Stand {
                Action::Move
            } else {
                *action
            };
            route.action_edges.push((from + offset, action, to + offset));
        }
        for (lm, decision) in &graph.nearness_edges {
            let idx = route.landmark_index(&graph.landmarks[*lm].clone());
            route.add_nearness(idx, decision + offset);
        }
    }
    Ok(route)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Action::*;

    fn seq(actions: &[Action]) -> ActionSeq {
        ActionSeq::new(actions.to_vec()).unwrap()
    }

    fn states(rows: &[&[u8]]) -> StateSeq {
        StateSeq::new(rows.iter().map(|r| r.to_vec()).collect()).unwrap()
    }

    fn toks(words: &[&str]) -> Vec<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    #[test]
    fn single_forward() {
        let g = build_graph(
            &seq(&[Forward, Stop]),
            &states(&[&[0, 0], &[0, 0]]),
            &toks(&["go", "."]),
        )
        .unwrap();
        assert_eq!(g.decision_count(), 2);
        assert_eq!(g.action_edges(), [(0, Forward, 1)]);
        assert!(g.landmarks().is_empty());
        assert_eq!(g.size(), 3);
    }

    #[test]
    fn forward_left_with_landmark() {
        // Tokens: the lamp . ; landmark "the lamp" at step 1.
        let g = build_graph(
            &seq(&[Forward, Left, Stop]),
            &states(&[&[1, 1, 0], &[0, 0, 0], &[0, 0, 0]]),
            &toks(&["the", "lamp", "."]),
        )
        .unwrap();
        assert_eq!(g.decision_count(), 3);
        assert_eq!(g.landmarks().len(), 1);
        assert_eq!(g.landmarks()[0], toks(&["the", "lamp"]));
        assert_eq!(g.action_edges().len(), 2);
        assert_eq!(g.nearness_edges(), [(0, 1)]);
        assert_eq!(g.size(), 7);
    }

    #[test]
    fn repeated_landmark_text_reuses_the_node() {
        let g = build_graph(
            &seq(&[Forward, Forward, Stop]),
            &states(&[&[1, 1], &[1, 1], &[0, 0]]),
            &toks(&["the", "wall"]),
        )
        .unwrap();
        assert_eq!(g.landmarks().len(), 1);
        assert_eq!(g.nearness_edges(), [(0, 1), (0, 2)]);
    }

    #[test]
    fn distinct_punctuation_makes_distinct_landmarks() {
        let g = build_graph(
            &seq(&[Forward, Forward, Stop]),
            &states(&[&[1, 1, 1, 0], &[1, 1, 1, 1], &[0, 0, 0, 0]]),
            &toks(&["the", "coat", "rack", ","]),
        )
        .unwrap();
        assert_eq!(g.landmarks().len(), 2);
    }

    #[test]
    fn stop_creates_no_node_or_edge() {
        let g = build_graph(
            &seq(&[Stop]),
            &states(&[&[1]]),
            &toks(&["lamp"]),
        )
        .unwrap();
        assert_eq!(g.decision_count(), 1);
        assert_eq!(g.size(), 1);
        assert!(g.landmarks().is_empty(), "STOP step landmarks are ignored");
    }

    #[test]
    fn length_mismatch_is_an_error() {
        let err = build_graph(&seq(&[Forward, Stop]), &states(&[&[0]]), &toks(&["x"]));
        assert!(err.is_err());
    }

    #[test]
    fn stitch_single_graph_is_identity() {
        let g = build_graph(
            &seq(&[Forward, Stop]),
            &states(&[&[0], &[0]]),
            &toks(&["go"]),
        )
        .unwrap();
        let stitched = stitch_route(std::slice::from_ref(&g)).unwrap();
        assert_eq!(stitched, g);
    }

    #[test]
    fn stitch_relabels_leading_stand_as_move() {
        let g1 = build_graph(
            &seq(&[Forward, Stop]),
            &states(&[&[0], &[0]]),
            &toks(&["go"]),
        )
        .unwrap();
        let g2 = build_graph(
            &seq(&[Stand, Forward, Stop]),
            &states(&[&[0], &[0], &[0]]),
            &toks(&["here"]),
        )
        .unwrap();
        let route = stitch_route(&[g1.clone(), g2]).unwrap();
        assert_eq!(route.decision_count(), 4);
        assert_eq!(route.action_edges()[1], (1, Move, 2));
        assert_eq!(route.action_edges()[2], (2, Forward, 3));
        // First sentence's own leading stand is untouched.
        let g3 = build_graph(
            &seq(&[Stand, Stop]),
            &states(&[&[0], &[0]]),
            &toks(&["x"]),
        )
        .unwrap();
        let solo = stitch_route(&[g3]).unwrap();
        assert_eq!(solo.action_edges()[0].1, Stand);
    }

    #[test]
    fn stitch_merges_landmarks_across_sentences() {
        let mk = |step_state: &[u8]| {
            build_graph(
                &seq(&[Forward, Stop]),
                &StateSeq::new(vec![step_state.to_vec(), vec![0; step_state.len()]]).unwrap(),
                &toks(&["the", "wall"]),
            )
            .unwrap()
        };
        let route = stitch_route(&[mk(&[1, 1]), mk(&[1, 1])]).unwrap();
        assert_eq!(route.landmarks().len(), 1);
        assert_eq!(route.nearness_edges(), [(0, 1), (0, 2)]);
    }

    #[test]
    fn stitch_path_length_is_additive() {
        let mk = |n: usize| {
            let mut actions = vec![Forward; n];
            actions.push(Stop);
            let st = vec![vec![0u8; 1]; n + 1];
            build_graph(
                &ActionSeq::new(actions).unwrap(),
                &StateSeq::new(st).unwrap(),
                &toks(&["x"]),
            )
            .unwrap()
        };
        let parts = [mk(2), mk(3), mk(1)];
        let route = stitch_route(&parts).unwrap();
        assert_eq!(route.decision_count(), 1 + 2 + 3 + 1);
        assert_eq!(route.action_edges().len(), 6);
    }

    #[test]
    fn stitch_empty_list_is_an_error() {
        assert!(matches!(stitch_route(&[]), Err(GraphError::EmptyRoute)));
    }

    #[test]
    fn spans_group_maximal_runs() {
        assert_eq!(spans_of_state(&[0, 1, 1, 0, 1]), [(1, 3), (4, 5)]);
        assert_eq!(spans_of_state(&[1, 1, 1]), [(0, 3)]);
        assert!(spans_of_state(&[0, 0]).is_empty());
    }
}
