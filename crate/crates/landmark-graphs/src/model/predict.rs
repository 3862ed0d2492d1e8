//! Inference: unroll the full lattice, Viterbi-decode the action sequence,
//! truncate at the first STOP, and read landmark states off the positive
//! state scores.

use super::{decode_unroll, encode, viterbi, Binder, ModelConfig, ModelError};
use crate::corpus::{Action, ActionSeq, Instruction, StateSeq, Vocabulary};
use crate::graphgen::spans_of_state;
use crate::numerics::{ParamStore, Tape};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// A decoded instruction: actions (ending in STOP unless the decode hit
/// the length cap), per-step landmark bit vectors, and the spans those
/// bits group into.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub actions: ActionSeq,
    pub states: StateSeq,
    /// Per kept step: maximal runs of set state bits, as half-open token
    /// ranges.
    pub spans: Vec<Vec<(usize, usize)>>,
    /// True when no STOP appeared within `max_decode_len` steps.
    pub truncated: bool,
}

/// Wire form of a prediction, one JSON object per line in prediction
/// files. Tokens ride along so graphs can be rebuilt without the corpus.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub route_id: String,
    pub sentence_id: u32,
    pub tokens: Vec<String>,
    pub actions: Vec<String>,
    pub states: Vec<Vec<u8>>,
    pub spans: Vec<Vec<(usize, usize)>>,
    pub truncated: bool,
}

impl PredictionRecord {
    pub fn from_prediction(ins: &Instruction, pred: &Prediction) -> PredictionRecord {
        PredictionRecord {
            route_id: ins.route_id.clone(),
            sentence_id: ins.sentence_id,
            tokens: ins.token_texts(),
            actions: pred
                .actions
                .actions()
                .iter()
                .map(|a| a.code().to_string())
                .collect(),
            states: pred.states.states().to_vec(),
            spans: pred.spans.clone(),
            truncated: pred.truncated,
        }
    }

    pub fn action_seq(&self) -> Result<ActionSeq, crate::corpus::CorpusError> {
        ActionSeq::new(
            self.actions
                .iter()
                .map(|c| Action::from_code(c))
                .collect::<Result<Vec<_>, _>>()?,
        )
    }

    pub fn state_seq(&self) -> Result<StateSeq, crate::corpus::CorpusError> {
        StateSeq::new(self.states.clone())
    }
}

/// Decode one instruction with frozen parameters. Deterministic for fixed
/// parameters; dropout is inactive.
pub fn predict(
    instruction: &Instruction,
    store: &ParamStore,
    config: &ModelConfig,
    vocab: &Vocabulary,
) -> Result<Prediction, ModelError> {
    let mut tape = Tape::new(false);
    let mut binder = Binder::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0); // unused: inference never draws
    let enc = encode(
        &mut tape,
        &mut binder,
        store,
        config,
        instruction,
        vocab,
        false,
        &mut rng,
    )?;
    let unroll = decode_unroll(
        &mut tape,
        &mut binder,
        store,
        config,
        &enc,
        config.max_decode_len,
    );

    let emissions: Vec<Vec<f64>> = unroll
        .emissions
        .iter()
        .map(|m| tape.value(*m).data().to_vec())
        .collect();
    let transitions = store
        .get("crf.trans")
        .expect("missing crf.trans")
        .data()
        .to_vec();
    let (path, _) = viterbi(&emissions, &transitions);

    let stop = Action::Stop.index();
    let keep = match path.iter().position(|&l| l == stop) {
        Some(p) => p + 1,
        None => path.len(),
    };
    let truncated = !path[..keep].contains(&stop);

    let actions = ActionSeq::new(
        path[..keep]
            .iter()
            .map(|&l| Action::from_index(l).unwrap())
            .collect(),
    )
    .expect("truncation leaves no interior STOP");

    let mut states = Vec::with_capacity(keep);
    let mut spans = Vec::with_capacity(keep);
    for beta in unroll.state_scores.iter().take(keep) {
        let bits: Vec<u8> = tape
            .value(*beta)
            .data()
            .iter()
            .map(|b| if *b > 0.0 { 1 } else { 0 })
            .collect();
        spans.push(spans_of_state(&bits));
        states.push(bits);
    }

    Ok(Prediction {
        actions,
        states: StateSeq::new(states).expect("bits are 0/1"),
        spans,
        truncated,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize;
    use crate::model::{init_params, NUM_LABELS};

    fn instruction(text: &str) -> Instruction {
        Instruction {
            tokens: tokenize(text),
            raw_text: text.into(),
            sentence_boundaries: vec![],
            gold_actions: None,
            gold_states: None,
            route_id: "r".into(),
            sentence_id: 0,
            start_pose: None,
            goal_xyz: None,
        }
    }

    fn setup() -> (ModelConfig, ParamStore, Vocabulary) {
        let cfg = ModelConfig::tiny(8);
        let store = init_params(&cfg, 21);
        let vocab = Vocabulary::from_words(
            ["go", "to", "the", "lamp"].iter().map(|s| s.to_string()).collect(),
            8,
            3,
        );
        (cfg, store, vocab)
    }

    #[test]
    fn prediction_is_deterministic() {
        let (cfg, store, vocab) = setup();
        let ins = instruction("go to the lamp");
        let a = predict(&ins, &store, &cfg, &vocab).unwrap();
        let b = predict(&ins, &store, &cfg, &vocab).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forced_stop_truncates_to_one_step() {
        let (cfg, mut store, vocab) = setup();
        // Huge unary bias toward STOP makes it the immediate argmax.
        let b = store.get_mut("crf.unary.b").unwrap();
        b.data_mut()[Action::Stop.index()] = 50.0;
        let ins = instruction("go to the lamp");
        let pred = predict(&ins, &store, &cfg, &vocab).unwrap();
        assert_eq!(pred.actions.actions(), [Action::Stop]);
        assert!(!pred.truncated);
        assert_eq!(pred.states.len(), 1);
    }

    #[test]
    fn no_stop_flags_truncation_at_max_len() {
        let (cfg, mut store, vocab) = setup();
        let b = store.get_mut("crf.unary.b").unwrap();
        b.data_mut()[Action::Stop.index()] = -50.0;
        b.data_mut()[Action::Forward.index()] = 50.0;
        let ins = instruction("go to the lamp");
        let pred = predict(&ins, &store, &cfg, &vocab).unwrap();
        assert!(pred.truncated);
        assert_eq!(pred.actions.len(), cfg.max_decode_len);
        assert!(pred.actions.actions().iter().all(|a| *a == Action::Forward));
    }

    #[test]
    fn nonpositive_scores_mean_empty_states_and_spans() {
        let (cfg, mut store, vocab) = setup();
        // Zero the state head entirely: every beta_s is 0, never positive.
        for name in ["att.state.w", "att.state.u", "att.state.v", "att.state.score"] {
            store.get_mut(name).unwrap().data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let ins = instruction("go to the lamp");
        let pred = predict(&ins, &store, &cfg, &vocab).unwrap();
        for (row, spans) in pred.states.states().iter().zip(&pred.spans) {
            assert!(row.iter().all(|b| *b == 0));
            assert!(spans.is_empty());
        }
    }

    #[test]
    fn spans_reproduce_positive_bits_exactly() {
        let (cfg, store, vocab) = setup();
        let ins = instruction("go to the lamp");
        let pred = predict(&ins, &store, &cfg, &vocab).unwrap();
        for (row, spans) in pred.states.states().iter().zip(&pred.spans) {
            let mut rebuilt = vec![0u8; row.len()];
            for &(s, e) in spans {
                rebuilt[s..e].iter_mut().for_each(|b| *b = 1);
            }
            assert_eq!(&rebuilt, row);
        }
    }

    #[test]
    fn emission_width_is_label_count() {
        let (cfg, store, vocab) = setup();
        let ins = instruction("go");
        let mut tape = Tape::new(false);
        let mut binder = Binder::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let enc = crate::model::encode(
            &mut tape, &mut binder, &store, &cfg, &ins, &vocab, false, &mut rng,
        )
        .unwrap();
        let unroll = crate::model::decode_unroll(&mut tape, &mut binder, &store, &cfg, &enc, 2);
        assert_eq!(tape.value(unroll.emissions[0]).len(), NUM_LABELS);
    }
}
