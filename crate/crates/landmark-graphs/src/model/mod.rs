//! The joint network: character-CNN + embedding encoder, bidirectional
//! LSTM, dual attention heads (action and landmark state), unidirectional
//! LSTM decoder, CRF action head and sigmoid state head, with training and
//! inference on top.

mod crf;
mod encoder;
mod gradcheck;
mod network;
mod predict;
mod train;

pub use crf::{crf_nll, path_score, viterbi};
pub use encoder::{encode, phi_features, EncoderOutput, PHI_DIM};
pub use gradcheck::{run_gradcheck, GradCheckReport, GRADCHECK_TOLERANCE};
pub use network::{decode_unroll, state_loss, Unroll};
pub use predict::{predict, Prediction, PredictionRecord};
pub use train::{train, TrainLog, TrainOptions};

use crate::corpus::{Vocabulary, CHAR_VOCAB};
use crate::numerics::{NumericsError, ParamStore, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("instruction has no tokens")]
    EmptyInstruction,
    #[error("instruction {route_id}/{sentence_id} is missing gold {what}")]
    MissingGold {
        route_id: String,
        sentence_id: u32,
        what: &'static str,
    },
    #[error("config: {0}")]
    Config(String),
    #[error(
        "checkpoint does not match this model: parameter {name} has shape {found:?} in the \
         checkpoint but the configuration implies {expected:?}"
    )]
    ShapeMismatch {
        name: String,
        found: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("checkpoint is missing parameter {0}")]
    MissingParam(String),
    #[error("non-finite loss at epoch {epoch}, sentence {sentence}: training diverged")]
    NonFiniteLoss { epoch: usize, sentence: usize },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// Hyperparameters. Defaults follow the reference setup: character
/// filters of widths 2/4/8/16 pooling to a 16-long feature, 300-d frozen
/// word vectors, 200-wide encoder halves, a 256-wide decoder, 20%/50%
/// dropout on encoder inputs/outputs, 50 epochs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub char_filter_sizes: Vec<usize>,
    pub char_feature_dim: usize,
    pub word_embed_dim: usize,
    pub encoder_hidden: usize,
    pub decoder_hidden: usize,
    pub attention_dim: usize,
    pub dropout_in: f64,
    pub dropout_out: f64,
    pub epochs: usize,
    pub max_decode_len: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            char_filter_sizes: vec![2, 4, 8, 16],
            char_feature_dim: 16,
            word_embed_dim: 300,
            encoder_hidden: 200,
            decoder_hidden: 256,
            attention_dim: 128,
            dropout_in: 0.2,
            dropout_out: 0.5,
            epochs: 50,
            max_decode_len: 40,
        }
    }
}

impl ModelConfig {
    /// A deliberately tiny configuration for gradient checks and fast
    /// tests. Dropout is off so losses are deterministic functions of the
    /// parameters.
    pub fn tiny(word_embed_dim: usize) -> ModelConfig {
        ModelConfig {
            char_filter_sizes: vec![2, 3],
            char_feature_dim: 4,
            word_embed_dim,
            encoder_hidden: 4,
            decoder_hidden: 4,
            attention_dim: 4,
            dropout_in: 0.0,
            dropout_out: 0.0,
            epochs: 5,
            max_decode_len: 6,
        }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if self.char_filter_sizes.is_empty() {
            return Err(ModelError::Config("no char filter sizes".into()));
        }
        if self.char_feature_dim % self.char_filter_sizes.len() != 0 {
            return Err(ModelError::Config(format!(
                "char_feature_dim {} is not divisible by the {} filter sizes",
                self.char_feature_dim,
                self.char_filter_sizes.len()
            )));
        }
        for &d in [
            self.char_feature_dim,
            self.word_embed_dim,
            self.encoder_hidden,
            self.decoder_hidden,
            self.attention_dim,
            self.epochs,
            self.max_decode_len,
        ]
        .iter()
        {
            if d == 0 {
                return Err(ModelError::Config("all dimensions must be positive".into()));
            }
        }
        for p in [self.dropout_in, self.dropout_out] {
            if !(0.0..1.0).contains(&p) {
                return Err(ModelError::Config(format!("dropout {p} outside [0, 1)")));
            }
        }
        Ok(())
    }

    /// Width of one character row: one-hot over the character vocabulary
    /// plus the four per-character flags.
    pub fn char_channels(&self) -> usize {
        CHAR_VOCAB + 4
    }

    pub fn filters_per_size(&self) -> usize {
        self.char_feature_dim / self.char_filter_sizes.len()
    }

    /// Encoder input width: word embedding plus character feature.
    pub fn encoder_input_dim(&self) -> usize {
        self.word_embed_dim + self.char_feature_dim
    }

    /// Width of [e_i, phi_i], the attended feature block.
    pub fn attend_feat_dim(&self) -> usize {
        2 * self.encoder_hidden + PHI_DIM
    }

    /// Width of [w_i, e_i, phi_i], the context summand per token.
    pub fn context_dim(&self) -> usize {
        self.word_embed_dim + self.attend_feat_dim()
    }

    /// Decoder input width: action context plus state context.
    pub fn decoder_input_dim(&self) -> usize {
        2 * self.context_dim()
    }

    /// Hash of the configuration plus the vocabulary fingerprint; stored
    /// in checkpoints so stale pairings fail loudly.
    pub fn config_hash(&self, vocab: &Vocabulary) -> String {
        let mut hasher = Sha256::new();
        hasher.update(serde_json::to_vec(self).expect("config serialization"));
        hasher.update(vocab.fingerprint().as_bytes());
        hasher.finalize()[..8]
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

pub const NUM_LABELS: usize = crate::corpus::NUM_ACTIONS;
const INIT_RANGE: f64 = 0.08;

/// Every parameter this model owns, as (name, shape) in creation order.
pub fn parameter_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let mut shapes = Vec::new();
    let channels = config.char_channels();
    let k = config.filters_per_size();
    for &size in &config.char_filter_sizes {
        shapes.push((format!("enc.char.conv{size}.w"), vec![k, size * channels]));
        shapes.push((format!("enc.char.conv{size}.b"), vec![k]));
    }
    let in_dim = config.encoder_input_dim();
    let h = config.encoder_hidden;
    for dir in ["fw", "bw"] {
        shapes.push((format!("enc.{dir}.w"), vec![in_dim, 4 * h]));
        shapes.push((format!("enc.{dir}.u"), vec![h, 4 * h]));
        shapes.push((format!("enc.{dir}.b"), vec![4 * h]));
    }
    let a = config.attention_dim;
    for head in ["act", "state"] {
        shapes.push((format!("att.{head}.w"), vec![config.decoder_hidden, a]));
        shapes.push((format!("att.{head}.u"), vec![config.word_embed_dim, a]));
        shapes.push((format!("att.{head}.v"), vec![config.attend_feat_dim(), a]));
        shapes.push((format!("att.{head}.score"), vec![a]));
    }
    let dh = config.decoder_hidden;
    shapes.push(("dec.w".into(), vec![config.decoder_input_dim(), 4 * dh]));
    shapes.push(("dec.u".into(), vec![dh, 4 * dh]));
    shapes.push(("dec.b".into(), vec![4 * dh]));
    shapes.push(("crf.unary.w".into(), vec![dh, NUM_LABELS]));
    shapes.push(("crf.unary.b".into(), vec![NUM_LABELS]));
    shapes.push(("crf.trans".into(), vec![NUM_LABELS, NUM_LABELS]));
    shapes
}

/// Fresh parameters: seeded uniform(-0.08, 0.08), LSTM forget-gate biases
/// raised by one.
pub fn init_params(config: &ModelConfig, seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    for (name, shape) in parameter_shapes(config) {
        let len: usize = shape.iter().product();
        let mut data: Vec<f64> = (0..len)
            .map(|_| rng.gen_range(-INIT_RANGE..INIT_RANGE))
            .collect();
        if matches!(name.as_str(), "enc.fw.b" | "enc.bw.b" | "dec.b") {
            // Gate order is (input, forget, cell, output).
            let h = shape[0] / 4;
            for v in data.iter_mut().skip(h).take(h) {
                *v += 1.0;
            }
        }
        store.insert(&name, Tensor::from_vec(&shape, data).unwrap());
    }
    store
}

/// Verify a loaded checkpoint agrees with the configuration's shapes.
pub fn check_shapes(store: &ParamStore, config: &ModelConfig) -> Result<(), ModelError> {
    for (name, expected) in parameter_shapes(config) {
        match store.get(&name) {
            Some(t) if t.shape() == expected.as_slice() => {}
            Some(t) => {
                return Err(ModelError::ShapeMismatch {
                    name,
                    found: t.shape().to_vec(),
                    expected,
                })
            }
            None => return Err(ModelError::MissingParam(name)),
        }
    }
    Ok(())
}

/// Binds store parameters onto a tape once per forward pass, remembering
/// the leaf each name landed on so gradients can flow back afterwards.
pub struct Binder {
    bound: HashMap<String, Var>,
    order: Vec<String>,
}

impl Binder {
    pub fn new() -> Binder {
        Binder {
            bound: HashMap::new(),
            order: Vec::new(),
        }
    }

    pub fn var(&mut self, tape: &mut Tape, store: &ParamStore, name: &str) -> Var {
        if let Some(v) = self.bound.get(name) {
            return *v;
        }
        let tensor = store
            .get(name)
            .unwrap_or_else(|| panic!("unknown parameter {name:?}"))
            .clone();
        let var = tape.leaf(tensor);
        self.bound.insert(name.to_string(), var);
        self.order.push(name.to_string());
        var
    }

    /// Accumulate tape gradients into the store's parameter grads.
    pub fn accumulate_grads(
        &self,
        tape: &Tape,
        loss: Var,
        store: &mut ParamStore,
    ) -> Result<(), NumericsError> {
        let grads = tape.backward(loss)?;
        for name in &self.order {
            let var = self.bound[name];
            store
                .get_mut(name)
                .expect("bound parameter vanished from store")
                .accumulate_grad(grads.wrt(var));
        }
        Ok(())
    }
}

impl Default for Binder {
    fn default() -> Self {
        Self::new()
    }
}
