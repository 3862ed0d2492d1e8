//! Fold-level evaluation: joins gold instructions with prediction records
//! and produces the full measurement table (action accuracy, goal accuracy
//! by distance threshold, span overlap and exact-match scores by
//! granularity, and graph similarity), per fold and averaged.

use super::{
    action_accuracy, goal_accuracy, graph_similarity_with_limit, jaccard, prf_from_counts,
    span_match_counts, Granularity, SpanSet, DEFAULT_GED_NODE_LIMIT, GOAL_THRESHOLDS,
};
use crate::corpus::{Action, ActionSeq, Corpus, Instruction};
use crate::graphgen::{build_graph_padded, spans_of_state, stitch_route, LandmarkGraph, LandmarkSpan};
use crate::model::PredictionRecord;
use crate::simulator::{goal_distance, goal_distance_to};
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize, Default)]
pub struct SpanRow {
    /// Mean per-unit Jaccard over units where either side has spans.
    pub jaccard: f64,
    /// Pooled intersection-over-union across all units.
    pub jaccard_micro: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Mean per-unit F1 over the same non-vacuous units.
    pub f1_macro: f64,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct SpanBlock {
    pub step: SpanRow,
    pub sentence: SpanRow,
    pub route: SpanRow,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct SimPair {
    pub strict: f64,
    pub relaxed: f64,
}

/// Metrics over one evaluation slice. Fields are absent (not zero) when
/// the gold annotations needed to compute them are missing.
#[derive(Debug, Clone, Serialize, Default)]
pub struct FoldReport {
    pub label: String,
    pub n_sentences: usize,
    pub n_routes: usize,
    pub action_accuracy: Option<f64>,
    pub goal_sentence: Option<Vec<f64>>,
    pub goal_route: Option<Vec<f64>>,
    pub spans: Option<SpanBlock>,
    pub graph_sentence: Option<SimPair>,
    pub graph_route: Option<SimPair>,
    /// Units skipped because exact edit distance exceeded the node limit.
    pub ged_skipped: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub overall: FoldReport,
    pub folds: Vec<FoldReport>,
    pub mean: Option<FoldReport>,
}

struct Matched<'a> {
    ins: &'a Instruction,
    rec: &'a PredictionRecord,
    pred_actions: ActionSeq,
    pred_states: crate::corpus::StateSeq,
}

fn unit_seed(seed: u64, route_id: &str, sentence: Option<u32>) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(route_id.as_bytes());
    if let Some(s) = sentence {
        hasher.update(s.to_le_bytes());
    }
    let d = hasher.finalize();
    u64::from_le_bytes(d[..8].try_into().unwrap())
}

/// Concatenate sentence action sequences into one route sequence:
/// non-final terminal STOPs are dropped and a leading `stand` on a
/// non-first sentence becomes `move`, mirroring graph stitching.
pub fn route_action_seq(sentences: &[&ActionSeq]) -> Option<ActionSeq> {
    let mut out: Vec<Action> = Vec::new();
    let last = sentences.len().checked_sub(1)?;
    for (k, seq) in sentences.iter().enumerate() {
        let mut actions = seq.actions().to_vec();
        if k < last && actions.last() == Some(&Action::Stop) {
            actions.pop();
        }
        if k > 0 {
            if let Some(first) = actions.first_mut() {
                if *first == Action::Stand {
                    *first = Action::Move;
                }
            }
        }
        out.extend(actions);
    }
    if out.is_empty() {
        return None;
    }
    ActionSeq::new(out).ok()
}

fn gold_spans(ins: &Instruction) -> Vec<LandmarkSpan> {
    let mut spans = Vec::new();
    if let Some(states) = &ins.gold_states {
        let tokens = ins.token_texts();
        for (t, row) in states.states().iter().enumerate() {
            for (start, end) in spans_of_state(row) {
                spans.push(LandmarkSpan {
                    tokens: tokens[start..end].to_vec(),
                    sentence_id: ins.sentence_id,
                    step: t,
                    start,
                    end,
                });
            }
        }
    }
    spans
}

fn pred_spans(m: &Matched) -> Vec<LandmarkSpan> {
    let mut spans = Vec::new();
    for (t, row) in m.pred_states.states().iter().enumerate() {
        for (start, end) in spans_of_state(row) {
            spans.push(LandmarkSpan {
                tokens: m.rec.tokens[start..end].to_vec(),
                sentence_id: m.rec.sentence_id,
                step: t,
                start,
                end,
            });
        }
    }
    spans
}

#[derive(Default)]
struct SpanAccumulator {
    jaccard_sum: f64,
    f1_sum: f64,
    units: usize,
    inter: usize,
    union: usize,
    correct: usize,
    predicted: usize,
    gold: usize,
}

impl SpanAccumulator {
    fn add(&mut self, pred: &SpanSet, gold: &SpanSet, granularity: Granularity) {
        let (c, p, g) = span_match_counts(pred, gold, granularity);
        self.correct += c;
        self.predicted += p;
        self.gold += g;
        if pred.is_empty() && gold.is_empty() {
            return; // vacuous unit
        }
        self.units += 1;
        self.jaccard_sum += jaccard(pred, gold);
        let (_, _, f1) = prf_from_counts(c, p, g);
        self.f1_sum += f1;
        let (i, u) = pooled_overlap(pred, gold);
        self.inter += i;
        self.union += u;
    }

    fn row(&self) -> SpanRow {
        if self.units == 0 {
            // Nothing to find and nothing found.
            return SpanRow {
                jaccard: 1.0,
                jaccard_micro: 1.0,
                precision: 1.0,
                recall: 1.0,
                f1: 1.0,
                f1_macro: 1.0,
            };
        }
        let (precision, recall, f1) = prf_from_counts(self.correct, self.predicted, self.gold);
        SpanRow {
            jaccard: self.jaccard_sum / self.units as f64,
            jaccard_micro: if self.union == 0 {
                1.0
            } else {
                self.inter as f64 / self.union as f64
            },
            precision,
            recall,
            f1,
            f1_macro: self.f1_sum / self.units as f64,
        }
    }
}

fn pooled_overlap(pred: &SpanSet, gold: &SpanSet) -> (usize, usize) {
    use std::collections::HashSet;
    let p: HashSet<(u32, usize, usize)> = pred
        .spans
        .iter()
        .flat_map(|s| (s.start..s.end).map(move |i| (s.sentence_id, s.step, i)))
        .collect();
    let g: HashSet<(u32, usize, usize)> = gold
        .spans
        .iter()
        .flat_map(|s| (s.start..s.end).map(move |i| (s.sentence_id, s.step, i)))
        .collect();
    (p.intersection(&g).count(), p.union(&g).count())
}

fn sentence_graph(
    tokens: &[String],
    actions: &ActionSeq,
    states: &crate::corpus::StateSeq,
) -> Option<LandmarkGraph> {
    build_graph_padded(actions, states, tokens).ok()
}

fn evaluate_slice(label: &str, matched: &[&Matched], seed: u64, ged_limit: usize) -> FoldReport {
    let mut report = FoldReport {
        label: label.to_string(),
        n_sentences: matched.len(),
        ..FoldReport::default()
    };

    // Group by route, ordered by sentence id.
    let mut routes: BTreeMap<&str, Vec<&Matched>> = BTreeMap::new();
    for m in matched {
        routes.entry(m.ins.route_id.as_str()).or_default().push(m);
    }
    for list in routes.values_mut() {
        list.sort_by_key(|m| m.ins.sentence_id);
    }
    report.n_routes = routes.len();

    // Action accuracy, micro over steps.
    let with_actions: Vec<&&Matched> = matched
        .iter()
        .filter(|m| m.ins.gold_actions.is_some())
        .collect();
    if !with_actions.is_empty() {
        let mut hits = 0.0;
        let mut total = 0.0;
        for m in &with_actions {
            let gold = m.ins.gold_actions.as_ref().unwrap();
            let denom = m.pred_actions.len().max(gold.len());
            hits += action_accuracy(&m.pred_actions, gold) * denom as f64;
            total += denom as f64;
        }
        report.action_accuracy = Some(hits / total);
    }

    // Goal accuracy per sentence.
    let mut sentence_distances = Vec::new();
    for m in matched {
        let s = unit_seed(seed, &m.ins.route_id, Some(m.ins.sentence_id));
        match (&m.ins.start_pose, &m.ins.goal_xyz) {
            (Some(start), Some(goal)) => {
                sentence_distances.push(goal_distance_to(&m.pred_actions, *start, *goal, s));
            }
            _ => {
                if let Some(gold) = &m.ins.gold_actions {
                    sentence_distances.push(goal_distance(&m.pred_actions, gold, s));
                }
            }
        }
    }
    if !sentence_distances.is_empty() {
        report.goal_sentence = Some(goal_accuracy(&sentence_distances, &GOAL_THRESHOLDS));
    }

    // Goal accuracy per route.
    let mut route_distances = Vec::new();
    for (route_id, list) in &routes {
        let s = unit_seed(seed, route_id, None);
        let pred_seqs: Vec<&ActionSeq> = list.iter().map(|m| &m.pred_actions).collect();
        let Some(pred_route) = route_action_seq(&pred_seqs) else {
            continue;
        };
        let first = list.first().unwrap();
        let last = list.last().unwrap();
        match (&first.ins.start_pose, &last.ins.goal_xyz) {
            (Some(start), Some(goal)) => {
                route_distances.push(goal_distance_to(&pred_route, *start, *goal, s));
            }
            _ => {
                if list.iter().all(|m| m.ins.gold_actions.is_some()) {
                    let gold_seqs: Vec<&ActionSeq> =
                        list.iter().map(|m| m.ins.gold_actions.as_ref().unwrap()).collect();
                    if let Some(gold_route) = route_action_seq(&gold_seqs) {
                        route_distances.push(goal_distance(&pred_route, &gold_route, s));
                    }
                }
            }
        }
    }
    if !route_distances.is_empty() {
        report.goal_route = Some(goal_accuracy(&route_distances, &GOAL_THRESHOLDS));
    }

    // Span metrics at the three granularities.
    let with_states: Vec<&&Matched> = matched
        .iter()
        .filter(|m| m.ins.gold_states.is_some())
        .collect();
    if !with_states.is_empty() {
        let mut step_acc = SpanAccumulator::default();
        let mut sentence_acc = SpanAccumulator::default();
        let mut route_acc = SpanAccumulator::default();

        for m in &with_states {
            let gold = gold_spans(m.ins);
            let pred = pred_spans(m);
            let steps = m
                .pred_states
                .len()
                .max(m.ins.gold_states.as_ref().unwrap().len());
            for t in 0..steps {
                let p = SpanSet::new(pred.iter().filter(|s| s.step == t).cloned().collect());
                let g = SpanSet::new(gold.iter().filter(|s| s.step == t).cloned().collect());
                step_acc.add(&p, &g, Granularity::Step);
            }
            sentence_acc.add(&SpanSet::new(pred), &SpanSet::new(gold), Granularity::Sentence);
        }
        for list in routes.values() {
            let pred: Vec<LandmarkSpan> = list
                .iter()
                .filter(|m| m.ins.gold_states.is_some())
                .flat_map(|m| pred_spans(m))
                .collect();
            let gold: Vec<LandmarkSpan> = list.iter().flat_map(|m| gold_spans(m.ins)).collect();
            route_acc.add(&SpanSet::new(pred), &SpanSet::new(gold), Granularity::Route);
        }

        report.spans = Some(SpanBlock {
            step: step_acc.row(),
            sentence: sentence_acc.row(),
            route: route_acc.row(),
        });
    }

    // Graph similarity per sentence and per route.
    let mut skipped = 0usize;
    let mut sent_sims: Vec<(f64, f64)> = Vec::new();
    for m in &with_states {
        let gold_actions = match &m.ins.gold_actions {
            Some(a) => a,
            None => continue,
        };
        let tokens = m.ins.token_texts();
        let gold_graph =
            sentence_graph(&tokens, gold_actions, m.ins.gold_states.as_ref().unwrap());
        let pred_graph = sentence_graph(&m.rec.tokens, &m.pred_actions, &m.pred_states);
        if let (Some(g), Some(p)) = (gold_graph, pred_graph) {
            match (
                graph_similarity_with_limit(&p, &g, false, ged_limit),
                graph_similarity_with_limit(&p, &g, true, ged_limit),
            ) {
                (Ok(s), Ok(r)) => sent_sims.push((s, r)),
                _ => skipped += 1,
            }
        }
    }
    if !sent_sims.is_empty() {
        let n = sent_sims.len() as f64;
        report.graph_sentence = Some(SimPair {
            strict: sent_sims.iter().map(|x| x.0).sum::<f64>() / n,
            relaxed: sent_sims.iter().map(|x| x.1).sum::<f64>() / n,
        });
    }

    let mut route_sims: Vec<(f64, f64)> = Vec::new();
    for list in routes.values() {
        if !list
            .iter()
            .all(|m| m.ins.gold_actions.is_some() && m.ins.gold_states.is_some())
        {
            continue;
        }
        let gold_graphs: Vec<LandmarkGraph> = list
            .iter()
            .filter_map(|m| {
                sentence_graph(
                    &m.ins.token_texts(),
                    m.ins.gold_actions.as_ref().unwrap(),
                    m.ins.gold_states.as_ref().unwrap(),
                )
            })
            .collect();
        let pred_graphs: Vec<LandmarkGraph> = list
            .iter()
            .filter_map(|m| sentence_graph(&m.rec.tokens, &m.pred_actions, &m.pred_states))
            .collect();
        if gold_graphs.len() != list.len() || pred_graphs.len() != list.len() {
            continue;
        }
        let (Ok(gold_route), Ok(pred_route)) =
            (stitch_route(&gold_graphs), stitch_route(&pred_graphs))
        else {
            continue;
        };
        match (
            graph_similarity_with_limit(&pred_route, &gold_route, false, ged_limit),
            graph_similarity_with_limit(&pred_route, &gold_route, true, ged_limit),
        ) {
            (Ok(s), Ok(r)) => route_sims.push((s, r)),
            _ => skipped += 1,
        }
    }
    if !route_sims.is_empty() {
        let n = route_sims.len() as f64;
        report.graph_route = Some(SimPair {
            strict: route_sims.iter().map(|x| x.0).sum::<f64>() / n,
            relaxed: route_sims.iter().map(|x| x.1).sum::<f64>() / n,
        });
    }
    report.ged_skipped = skipped;

    report
}

/// Evaluate predictions against the corpus: an overall slice over every
/// matched sentence, one slice per fold's test split (when folds exist),
/// and the arithmetic mean across folds.
pub fn evaluate(
    corpus: &Corpus,
    predictions: &[PredictionRecord],
    seed: u64,
    ged_limit: usize,
) -> EvalReport {
    let mut by_id: BTreeMap<(&str, u32), &PredictionRecord> = BTreeMap::new();
    for rec in predictions {
        by_id.insert((rec.route_id.as_str(), rec.sentence_id), rec);
    }
    let matched: Vec<Matched> = corpus
        .instructions
        .iter()
        .filter_map(|ins| {
            let rec = by_id.get(&(ins.route_id.as_str(), ins.sentence_id))?;
            let pred_actions = rec.action_seq().ok()?;
            let pred_states = rec.state_seq().ok()?;
            Some(Matched {
                ins,
                rec,
                pred_actions,
                pred_states,
            })
        })
        .collect();

    let all_refs: Vec<&Matched> = matched.iter().collect();
    let overall = evaluate_slice("overall", &all_refs, seed, ged_limit);

    let mut folds = Vec::new();
    for (k, fold) in corpus.folds.iter().enumerate() {
        let test_set: std::collections::HashSet<usize> = fold.test.iter().copied().collect();
        let index_of: BTreeMap<(&str, u32), usize> = corpus
            .instructions
            .iter()
            .enumerate()
            .map(|(i, ins)| ((ins.route_id.as_str(), ins.sentence_id), i))
            .collect();
        let slice: Vec<&Matched> = matched
            .iter()
            .filter(|m| {
                index_of
                    .get(&(m.ins.route_id.as_str(), m.ins.sentence_id))
                    .is_some_and(|i| test_set.contains(i))
            })
            .collect();
        if !slice.is_empty() {
            folds.push(evaluate_slice(&format!("fold-{k}"), &slice, seed, ged_limit));
        }
    }

    let mean = if folds.is_empty() {
        None
    } else {
        Some(mean_report(&folds))
    };
    EvalReport {
        overall,
        folds,
        mean,
    }
}

pub fn evaluate_default(corpus: &Corpus, predictions: &[PredictionRecord], seed: u64) -> EvalReport {
    evaluate(corpus, predictions, seed, DEFAULT_GED_NODE_LIMIT)
}

fn mean_opt(values: Vec<Option<f64>>) -> Option<f64> {
    let present: Vec<f64> = values.into_iter().flatten().collect();
    if present.is_empty() {
        None
    } else {
        Some(present.iter().sum::<f64>() / present.len() as f64)
    }
}

fn mean_vec(values: Vec<Option<&Vec<f64>>>) -> Option<Vec<f64>> {
    let present: Vec<&Vec<f64>> = values.into_iter().flatten().collect();
    if present.is_empty() {
        return None;
    }
    let width = present[0].len();
    let mut out = vec![0.0; width];
    for v in &present {
        for (o, x) in out.iter_mut().zip(v.iter()) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|o| *o /= present.len() as f64);
    Some(out)
}

fn mean_report(folds: &[FoldReport]) -> FoldReport {
    let mean_row = |rows: Vec<&SpanRow>| -> SpanRow {
        let n = rows.len() as f64;
        SpanRow {
            jaccard: rows.iter().map(|r| r.jaccard).sum::<f64>() / n,
            jaccard_micro: rows.iter().map(|r| r.jaccard_micro).sum::<f64>() / n,
            precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
            recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
            f1: rows.iter().map(|r| r.f1).sum::<f64>() / n,
            f1_macro: rows.iter().map(|r| r.f1_macro).sum::<f64>() / n,
        }
    };
    let span_blocks: Vec<&SpanBlock> = folds.iter().filter_map(|f| f.spans.as_ref()).collect();
    let spans = if span_blocks.is_empty() {
        None
    } else {
        Some(SpanBlock {
            step: mean_row(span_blocks.iter().map(|b| &b.step).collect()),
            sentence: mean_row(span_blocks.iter().map(|b| &b.sentence).collect()),
            route: mean_row(span_blocks.iter().map(|b| &b.route).collect()),
        })
    };
    let mean_sim = |get: fn(&FoldReport) -> Option<&SimPair>| -> Option<SimPair> {
        let pairs: Vec<&SimPair> = folds.iter().filter_map(get).collect();
        if pairs.is_empty() {
            return None;
        }
        let n = pairs.len() as f64;
        Some(SimPair {
            strict: pairs.iter().map(|p| p.strict).sum::<f64>() / n,
            relaxed: pairs.iter().map(|p| p.relaxed).sum::<f64>() / n,
        })
    };

    FoldReport {
        label: "3-fold mean".into(),
        n_sentences: folds.iter().map(|f| f.n_sentences).sum(),
        n_routes: folds.iter().map(|f| f.n_routes).sum(),
        action_accuracy: mean_opt(folds.iter().map(|f| f.action_accuracy).collect()),
        goal_sentence: mean_vec(folds.iter().map(|f| f.goal_sentence.as_ref()).collect()),
        goal_route: mean_vec(folds.iter().map(|f| f.goal_route.as_ref()).collect()),
        spans,
        graph_sentence: mean_sim(|f| f.graph_sentence.as_ref()),
        graph_route: mean_sim(|f| f.graph_route.as_ref()),
        ged_skipped: folds.iter().map(|f| f.ged_skipped).sum(),
    }
}

fn pct(v: f64) -> String {
    format!("{:6.1}%", v * 100.0)
}

fn render_fold(out: &mut String, r: &FoldReport) {
    use std::fmt::Write;
    writeln!(
        out,
        "== {} ({} sentences, {} routes)",
        r.label, r.n_sentences, r.n_routes
    )
    .unwrap();
    match r.action_accuracy {
        Some(a) => writeln!(out, "  action accuracy: {}", pct(a)).unwrap(),
        None => writeln!(out, "  action accuracy: (no gold actions)").unwrap(),
    }
    for (name, block) in [("sentence", &r.goal_sentence), ("route", &r.goal_route)] {
        match block {
            Some(acc) => {
                let cells: Vec<String> = acc.iter().map(|a| pct(*a)).collect();
                writeln!(out, "  goal accuracy ({name}), d=0..3: {}", cells.join(" ")).unwrap();
            }
            None => writeln!(out, "  goal accuracy ({name}): (unavailable)").unwrap(),
        }
    }
    match &r.spans {
        Some(block) => {
            writeln!(out, "  spans          J       J-micro P       R       F1      F1-macro").unwrap();
            for (name, row) in [
                ("step", &block.step),
                ("sentence", &block.sentence),
                ("route", &block.route),
            ] {
                writeln!(
                    out,
                    "    {name:<9} {} {} {} {} {} {}",
                    pct(row.jaccard),
                    pct(row.jaccard_micro),
                    pct(row.precision),
                    pct(row.recall),
                    pct(row.f1),
                    pct(row.f1_macro),
                )
                .unwrap();
            }
        }
        None => writeln!(out, "  spans: (no gold states)").unwrap(),
    }
    for (name, block) in [
        ("sentence", &r.graph_sentence),
        ("route", &r.graph_route),
    ] {
        match block {
            Some(p) => writeln!(
                out,
                "  graph sim ({name}): strict {} relaxed {}",
                pct(p.strict),
                pct(p.relaxed)
            )
            .unwrap(),
            None => writeln!(out, "  graph sim ({name}): (unavailable)").unwrap(),
        }
    }
    if r.ged_skipped > 0 {
        writeln!(out, "  ({} graph pairs over the GED node limit)", r.ged_skipped).unwrap();
    }
}

pub fn render_text(report: &EvalReport) -> String {
    let mut out = String::new();
    render_fold(&mut out, &report.overall);
    for fold in &report.folds {
        render_fold(&mut out, fold);
    }
    if let Some(mean) = &report.mean {
        render_fold(&mut out, mean);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic, make_folds, StateSeq};
    use crate::model::PredictionRecord;

    fn perfect_record(ins: &Instruction) -> PredictionRecord {
        PredictionRecord {
            route_id: ins.route_id.clone(),
            sentence_id: ins.sentence_id,
            tokens: ins.token_texts(),
            actions: ins
                .gold_actions
                .as_ref()
                .unwrap()
                .actions()
                .iter()
                .map(|a| a.code().to_string())
                .collect(),
            states: ins.gold_states.as_ref().unwrap().states().to_vec(),
            spans: ins
                .gold_states
                .as_ref()
                .unwrap()
                .states()
                .iter()
                .map(|row| spans_of_state(row))
                .collect(),
            truncated: false,
        }
    }

    #[test]
    fn perfect_predictions_score_one_everywhere() {
        let corpus = make_folds(generate_synthetic(20, 3).unwrap(), 1).unwrap();
        let preds: Vec<PredictionRecord> = corpus
            .instructions
            .iter()
            .map(perfect_record)
            .collect();
        let report = evaluate_default(&corpus, &preds, 7);
        let o = &report.overall;
        assert_eq!(o.n_sentences, corpus.len());
        assert_eq!(o.action_accuracy, Some(1.0));
        assert_eq!(o.goal_sentence.as_ref().unwrap(), &vec![1.0; 4]);
        assert_eq!(o.goal_route.as_ref().unwrap(), &vec![1.0; 4]);
        let spans = o.spans.as_ref().unwrap();
        for row in [&spans.step, &spans.sentence, &spans.route] {
            assert_eq!(row.f1, 1.0);
            assert_eq!(row.jaccard, 1.0);
        }
        assert_eq!(o.graph_sentence.as_ref().unwrap().strict, 1.0);
        assert_eq!(o.graph_route.as_ref().unwrap().strict, 1.0);
        assert_eq!(report.folds.len(), 3);
        assert!(report.mean.is_some());
        assert_eq!(report.mean.as_ref().unwrap().action_accuracy, Some(1.0));
    }

    #[test]
    fn goal_monotonicity_holds_in_reports() {
        let corpus = make_folds(generate_synthetic(15, 5).unwrap(), 2).unwrap();
        // Predictions: always [f, STOP], usually wrong.
        let preds: Vec<PredictionRecord> = corpus
            .instructions
            .iter()
            .map(|ins| {
                let n = ins.tokens.len();
                PredictionRecord {
                    route_id: ins.route_id.clone(),
                    sentence_id: ins.sentence_id,
                    tokens: ins.token_texts(),
                    actions: vec!["f".into(), "STOP".into()],
                    states: vec![vec![0; n]; 2],
                    spans: vec![vec![]; 2],
                    truncated: false,
                }
            })
            .collect();
        let report = evaluate_default(&corpus, &preds, 3);
        for acc in [
            report.overall.goal_sentence.as_ref().unwrap(),
            report.overall.goal_route.as_ref().unwrap(),
        ] {
            for w in acc.windows(2) {
                assert!(w[1] >= w[0], "{acc:?} not monotone");
            }
        }
        let text = render_text(&report);
        assert!(text.contains("action accuracy"));
    }

    #[test]
    fn missing_gold_blocks_are_absent_not_zero() {
        let mut corpus = generate_synthetic(12, 8).unwrap();
        for ins in corpus.instructions.iter_mut() {
            ins.gold_actions = None;
            ins.gold_states = None;
        }
        let preds: Vec<PredictionRecord> = corpus
            .instructions
            .iter()
            .map(|ins| PredictionRecord {
                route_id: ins.route_id.clone(),
                sentence_id: ins.sentence_id,
                tokens: ins.token_texts(),
                actions: vec!["f".into(), "STOP".into()],
                states: vec![vec![0; ins.tokens.len()]; 2],
                spans: vec![vec![]; 2],
                truncated: false,
            })
            .collect();
        let report = evaluate_default(&corpus, &preds, 3);
        assert!(report.overall.action_accuracy.is_none());
        assert!(report.overall.goal_sentence.is_none());
        assert!(report.overall.spans.is_none());
        assert!(report.overall.graph_sentence.is_none());
        let text = render_text(&report);
        assert!(text.contains("unavailable") || text.contains("no gold"));
    }

    #[test]
    fn route_sequence_transform() {
        use Action::*;
        let a = ActionSeq::new(vec![Forward, Stop]).unwrap();
        let b = ActionSeq::new(vec![Stand, Left, Stop]).unwrap();
        let route = route_action_seq(&[&a, &b]).unwrap();
        assert_eq!(route.actions(), [Forward, Move, Left, Stop]);
        // Single sentence: untouched.
        let solo = route_action_seq(&[&b]).unwrap();
        assert_eq!(solo.actions(), [Stand, Left, Stop]);
    }

    #[test]
    fn sentence_graphs_pad_missing_state_rows() {
        use Action::*;
        let tokens: Vec<String> = ["go"].iter().map(|s| s.to_string()).collect();
        let actions = ActionSeq::new(vec![Forward, Forward, Stop]).unwrap();
        let states = StateSeq::new(vec![vec![0]]).unwrap();
        let g = sentence_graph(&tokens, &actions, &states).unwrap();
        assert_eq!(g.decision_count(), 3);
    }
}
