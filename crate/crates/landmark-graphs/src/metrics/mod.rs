//! Evaluation measures: positional action accuracy, distance-thresholded
//! goal accuracy, span precision/recall/F1 and Jaccard, and strict/relaxed
//! graph similarity through exact graph edit distance.

mod ged;
pub mod report;

pub use ged::{
    ged, ged_with_limit, graph_similarity, graph_similarity_with_limit, EditCostModel,
    MetricsError, DEFAULT_GED_NODE_LIMIT,
};

use crate::corpus::ActionSeq;
use crate::graphgen::LandmarkSpan;
use std::collections::HashSet;

/// Fraction of positionally matching steps, with `max(|pred|, |gold|)` as
/// the denominator so length mismatches count against the score.
pub fn action_accuracy(pred: &ActionSeq, gold: &ActionSeq) -> f64 {
    let denom = pred.len().max(gold.len());
    if denom == 0 {
        return 1.0;
    }
    let matches = pred
        .actions()
        .iter()
        .zip(gold.actions())
        .filter(|(a, b)| a == b)
        .count();
    matches as f64 / denom as f64
}

/// Fraction of units whose goal distance is within each threshold.
pub fn goal_accuracy(distances: &[f64], thresholds: &[f64]) -> Vec<f64> {
    if distances.is_empty() {
        return vec![0.0; thresholds.len()];
    }
    thresholds
        .iter()
        .map(|t| {
            let hits = distances.iter().filter(|d| **d <= *t).count();
            hits as f64 / distances.len() as f64
        })
        .collect()
}

pub const GOAL_THRESHOLDS: [f64; 4] = [0.0, 1.0, 2.0, 3.0];

/// Span matching granularity. Step requires the right span at the right
/// step; Sentence the right span anywhere in its sentence; Route the right
/// surface text anywhere in the route.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Step,
    Sentence,
    Route,
}

/// A set of landmark spans under comparison, e.g. everything predicted for
/// one step, one sentence, or one route. Within a step, spans never
/// overlap (they are maximal runs of state bits).
#[derive(Debug, Clone, Default)]
pub struct SpanSet {
    pub spans: Vec<LandmarkSpan>,
}

impl SpanSet {
    pub fn new(spans: Vec<LandmarkSpan>) -> SpanSet {
        SpanSet { spans }
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Token occurrences keyed by sentence position, so repeated words
    /// stay distinct.
    fn token_occurrences(&self) -> HashSet<(u32, usize, usize)> {
        let mut out = HashSet::new();
        for span in &self.spans {
            for pos in span.start..span.end {
                out.insert((span.sentence_id, span.step, pos));
            }
        }
        out
    }

    /// Same, but ignoring the step component.
    fn token_positions(&self) -> HashSet<(u32, usize)> {
        let mut out = HashSet::new();
        for span in &self.spans {
            for pos in span.start..span.end {
                out.insert((span.sentence_id, pos));
            }
        }
        out
    }

    fn keys(&self, granularity: Granularity) -> HashSet<SpanKey> {
        self.spans
            .iter()
            .map(|s| match granularity {
                Granularity::Step => SpanKey::Step(s.sentence_id, s.step, s.start, s.end),
                Granularity::Sentence => SpanKey::Sentence(s.sentence_id, s.start, s.end),
                Granularity::Route => SpanKey::Route(s.tokens.clone()),
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
enum SpanKey {
    Step(u32, usize, usize, usize),
    Sentence(u32, usize, usize),
    Route(Vec<String>),
}

/// Jaccard index over span token occurrences (position-keyed). Both sets
/// empty counts as 1.
pub fn jaccard(pred: &SpanSet, gold: &SpanSet) -> f64 {
    jaccard_keyed(pred, gold, false)
}

/// Position-keyed Jaccard; with `by_step` the step index participates in
/// the occurrence key.
pub fn jaccard_keyed(pred: &SpanSet, gold: &SpanSet, by_step: bool) -> f64 {
    if by_step {
        let (p, g) = (pred.token_occurrences(), gold.token_occurrences());
        set_jaccard(&p, &g)
    } else {
        let (p, g) = (pred.token_positions(), gold.token_positions());
        set_jaccard(&p, &g)
    }
}

fn set_jaccard<T: std::hash::Hash + Eq>(p: &HashSet<T>, g: &HashSet<T>) -> f64 {
    if p.is_empty() && g.is_empty() {
        return 1.0;
    }
    let inter = p.intersection(g).count();
    let union = p.union(g).count();
    inter as f64 / union as f64
}

/// Jaccard over plain token sets (types, not occurrences); this is the
/// measure used for relaxed landmark substitution in graph similarity.
pub fn jaccard_tokens(a: &[String], b: &[String]) -> f64 {
    let pa: HashSet<&String> = a.iter().collect();
    let pb: HashSet<&String> = b.iter().collect();
    if pa.is_empty() && pb.is_empty() {
        return 1.0;
    }
    pa.intersection(&pb).count() as f64 / pa.union(&pb).count() as f64
}

/// Exact-match counts for micro-averaged precision/recall: a predicted
/// span is correct iff it matches a gold span exactly under the
/// granularity's identity key.
pub fn span_match_counts(
    pred: &SpanSet,
    gold: &SpanSet,
    granularity: Granularity,
) -> (usize, usize, usize) {
    let p = pred.keys(granularity);
    let g = gold.keys(granularity);
    let correct = p.intersection(&g).count();
    (correct, p.len(), g.len())
}

/// Precision/recall/F1 from correct/predicted/gold counts. Empty pred and
/// gold scores 1; empty pred against non-empty gold scores 0.
pub fn prf_from_counts(correct: usize, predicted: usize, gold: usize) -> (f64, f64, f64) {
    if predicted == 0 && gold == 0 {
        return (1.0, 1.0, 1.0);
    }
    let p = if predicted == 0 {
        0.0
    } else {
        correct as f64 / predicted as f64
    };
    let r = if gold == 0 {
        0.0
    } else {
        correct as f64 / gold as f64
    };
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1)
}

/// Micro-averaged precision/recall/F1 over a pred/gold span-set pair.
pub fn span_prf(pred: &SpanSet, gold: &SpanSet, granularity: Granularity) -> (f64, f64, f64) {
    let (c, p, g) = span_match_counts(pred, gold, granularity);
    prf_from_counts(c, p, g)
}
