//! Joint training loop: batch size 1, per-epoch reshuffles, joint loss
//! (CRF action NLL plus sigmoid state cross entropy), Adam with the
//! exponential learning-rate schedule, one checkpoint per epoch.

use super::{crf_nll, decode_unroll, encode, init_params, state_loss, Binder, ModelConfig, ModelError};
use crate::corpus::{Corpus, Vocabulary};
use crate::numerics::{save_checkpoint, ExpDecay, ParamStore, Tape};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::path::PathBuf;

#[derive(Debug, Clone, Default)]
pub struct TrainOptions {
    /// Where per-epoch checkpoints land; no files are written when unset.
    pub out_dir: Option<PathBuf>,
    pub schedule: ExpDecay,
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainLog {
    /// Mean joint loss per epoch, in epoch order.
    pub epoch_losses: Vec<f64>,
    pub steps: u64,
}

/// Train on the instructions selected by `indices` (every one must carry
/// gold actions and states). Returns the trained parameters and the loss
/// log; the whole run is deterministic under `seed`.
pub fn train(
    corpus: &Corpus,
    indices: &[usize],
    vocab: &Vocabulary,
    config: &ModelConfig,
    seed: u64,
    options: &TrainOptions,
) -> Result<(ParamStore, TrainLog), ModelError> {
    config.validate()?;
    if indices.is_empty() {
        return Err(ModelError::Config("no training sentences selected".into()));
    }
    for &i in indices {
        let ins = &corpus.instructions[i];
        if ins.gold_actions.is_none() {
            return Err(ModelError::MissingGold {
                route_id: ins.route_id.clone(),
                sentence_id: ins.sentence_id,
                what: "actions",
            });
        }
        if ins.gold_states.is_none() {
            return Err(ModelError::MissingGold {
                route_id: ins.route_id.clone(),
                sentence_id: ins.sentence_id,
                what: "states",
            });
        }
    }

    let mut store = init_params(config, seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let config_hash = config.config_hash(vocab);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    let mut order: Vec<usize> = indices.to_vec();

    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (k, &idx) in order.iter().enumerate() {
            let ins = &corpus.instructions[idx];
            let gold_actions = ins.gold_actions.as_ref().unwrap();
            let gold_states = ins.gold_states.as_ref().unwrap();

            let mut tape = Tape::new(true);
            let mut binder = Binder::new();
            let enc = encode(
                &mut tape, &mut binder, &store, config, ins, vocab, true, &mut rng,
            )?;
            let unroll =
                decode_unroll(&mut tape, &mut binder, &store, config, &enc, gold_actions.len());
            let trans = binder.var(&mut tape, &store, "crf.trans");
            let action_loss = crf_nll(&mut tape, &unroll.emissions, trans, gold_actions)?;
            let landmark_loss = state_loss(&mut tape, &unroll.state_scores, gold_states)?;
            let loss = tape.add(action_loss, landmark_loss);

            let loss_value = tape.value(loss).item();
            if !loss_value.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    epoch,
                    sentence: k,
                });
            }
            epoch_loss += loss_value;

            store.zero_grads();
            binder.accumulate_grads(&tape, loss, &mut store)?;
            let lr = options.schedule.at(store.step());
            store.adam_step(lr)?;
        }
        let mean = epoch_loss / order.len() as f64;
        epoch_losses.push(mean);
        log::info!("epoch {epoch}/{}: mean loss {mean:.6}", config.epochs);

        if let Some(dir) = &options.out_dir {
            let path = dir.join(format!("epoch_{epoch:04}.ckpt"));
            save_checkpoint(&store, &config_hash, path)?;
        }
    }

    if let Some(dir) = &options.out_dir {
        save_checkpoint(&store, &config_hash, dir.join("final.ckpt"))?;
    }

    let log = TrainLog {
        epoch_losses,
        steps: store.step(),
    };
    Ok((store, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::generate_synthetic;
    use crate::numerics::load_checkpoint;

    fn tiny_vocab(corpus: &Corpus, dim: usize, seed: u64) -> Vocabulary {
        let mut words: Vec<String> = corpus
            .instructions
            .iter()
            .flat_map(|i| i.token_texts())
            .collect();
        words.sort();
        words.dedup();
        Vocabulary::from_words(words, dim, seed)
    }

    fn tiny_setup(routes: usize) -> (Corpus, Vocabulary, ModelConfig) {
        let corpus = generate_synthetic(routes, 4).unwrap();
        let vocab = tiny_vocab(&corpus, 8, 1);
        let mut cfg = ModelConfig::tiny(8);
        cfg.epochs = 3;
        (corpus, vocab, cfg)
    }

    #[test]
    fn loss_decreases_on_a_small_corpus() {
        let corpus = generate_synthetic(6, 9).unwrap();
        let vocab = tiny_vocab(&corpus, 8, 1);
        let mut cfg = ModelConfig::tiny(8);
        cfg.epochs = 50;
        let indices: Vec<usize> = (0..corpus.len()).collect();
        let (_, log) =
            train(&corpus, &indices, &vocab, &cfg, 7, &TrainOptions::default()).unwrap();
        let first = log.epoch_losses[0];
        let last = *log.epoch_losses.last().unwrap();
        assert!(
            last < 0.5 * first,
            "epoch-1 mean {first} vs final {last}: no convergence"
        );
    }

    #[test]
    fn training_is_deterministic_under_seed() {
        let (corpus, vocab, cfg) = tiny_setup(3);
        let indices: Vec<usize> = (0..corpus.len()).collect();
        let run = || {
            let (store, log) =
                train(&corpus, &indices, &vocab, &cfg, 42, &TrainOptions::default()).unwrap();
            let flat: Vec<f64> = store
                .names()
                .flat_map(|n| store.get(n).unwrap().data().to_vec())
                .collect();
            (flat, log.epoch_losses)
        };
        let (a, la) = run();
        let (b, lb) = run();
        assert_eq!(a, b, "parameter drift between identical runs");
        assert_eq!(la, lb);
    }

    #[test]
    fn checkpoints_are_written_per_epoch() {
        let (corpus, vocab, cfg) = tiny_setup(2);
        let indices: Vec<usize> = (0..corpus.len()).collect();
        let dir = tempfile::tempdir().unwrap();
        let options = TrainOptions {
            out_dir: Some(dir.path().to_path_buf()),
            schedule: ExpDecay::default(),
        };
        let (store, _) = train(&corpus, &indices, &vocab, &cfg, 1, &options).unwrap();
        for epoch in 1..=cfg.epochs {
            assert!(dir.path().join(format!("epoch_{epoch:04}.ckpt")).exists());
        }
        let final_ckpt = load_checkpoint(dir.path().join("final.ckpt")).unwrap();
        assert_eq!(final_ckpt.store.step(), store.step());
        assert_eq!(final_ckpt.config_hash, cfg.config_hash(&vocab));
    }

    #[test]
    fn missing_gold_states_is_a_precondition_error() {
        let (mut corpus, vocab, cfg) = tiny_setup(2);
        corpus.instructions[0].gold_states = None;
        corpus.instructions[0].gold_actions = None;
        let indices: Vec<usize> = (0..corpus.len()).collect();
        let err = train(&corpus, &indices, &vocab, &cfg, 1, &TrainOptions::default());
        assert!(matches!(err, Err(ModelError::MissingGold { .. })));
    }
}
