//! Sentence encoder: per-word character CNN features concatenated with
//! the frozen word embedding, dropout on the inputs, a bidirectional LSTM
//! over the sentence, dropout on the outputs, plus the explicit word
//! feature block.

use super::{Binder, ModelConfig, ModelError};
use crate::corpus::{char_id, pos_index, Instruction, Vocabulary, UNIVERSAL_POS};
use crate::numerics::{lstm_cell, LstmWeights, ParamStore, Tape, Tensor, Var};
use rand_chacha::ChaCha8Rng;

/// Explicit per-word features: is_capitalized, is_digit, is_first,
/// is_last, then a one-hot over the universal POS set (zeros when the
/// corpus carries no tags).
pub const PHI_DIM: usize = 4 + UNIVERSAL_POS.len();

pub fn phi_features(instruction: &Instruction) -> Vec<Vec<f64>> {
    let n = instruction.tokens.len();
    instruction
        .tokens
        .iter()
        .enumerate()
        .map(|(i, tok)| {
            let mut phi = vec![0.0; PHI_DIM];
            if tok.text.chars().next().is_some_and(char::is_uppercase) {
                phi[0] = 1.0;
            }
            if !tok.text.is_empty() && tok.text.chars().all(char::is_numeric) {
                phi[1] = 1.0;
            }
            if i == 0 {
                phi[2] = 1.0;
            }
            if i + 1 == n {
                phi[3] = 1.0;
            }
            if let Some(tag) = &tok.pos_tag {
                if let Some(p) = pos_index(tag) {
                    phi[4 + p] = 1.0;
                }
            }
            phi
        })
        .collect()
}

/// One character row: one-hot id plus {is_digit, is_alpha, is_upper,
/// is_punct} flags.
fn char_rows(word: &str, channels: usize) -> (usize, Vec<f64>) {
    let chars: Vec<char> = word.chars().collect();
    let mut rows = vec![0.0; chars.len() * channels];
    for (i, &c) in chars.iter().enumerate() {
        let row = &mut rows[i * channels..(i + 1) * channels];
        row[char_id(c)] = 1.0;
        let flags = channels - 4;
        if c.is_numeric() {
            row[flags] = 1.0;
        }
        if c.is_alphabetic() {
            row[flags + 1] = 1.0;
        }
        if c.is_uppercase() {
            row[flags + 2] = 1.0;
        }
        if c.is_ascii_punctuation() {
            row[flags + 3] = 1.0;
        }
    }
    (chars.len(), rows)
}

/// Everything the decoder attends over, one row per input token.
pub struct EncoderOutput {
    /// (n, embed_dim) frozen word embeddings.
    pub word_embeds: Var,
    /// (n, 2*encoder_hidden) bi-LSTM states after output dropout.
    pub enc_states: Var,
    /// (n, 2*encoder_hidden + PHI_DIM), the [e_i, phi_i] block.
    pub attend_feats: Var,
    /// (n, embed + 2*encoder_hidden + PHI_DIM), the [w_i, e_i, phi_i] rows
    /// summed into context vectors.
    pub context_feats: Var,
    pub n: usize,
}

/// Encode an instruction. With `training` set, input and output dropout
/// draw masks from `rng`; inference is deterministic.
pub fn encode(
    tape: &mut Tape,
    binder: &mut Binder,
    store: &ParamStore,
    config: &ModelConfig,
    instruction: &Instruction,
    vocab: &Vocabulary,
    training: bool,
    rng: &mut ChaCha8Rng,
) -> Result<EncoderOutput, ModelError> {
    let n = instruction.tokens.len();
    if n == 0 {
        return Err(ModelError::EmptyInstruction);
    }
    debug_assert_eq!(vocab.embed_dim(), config.word_embed_dim);

    let channels = config.char_channels();
    let filters = config.filters_per_size();

    // Per-token inputs: char CNN features concatenated with the embedding.
    let mut inputs = Vec::with_capacity(n);
    let mut embed_rows = Vec::with_capacity(n);
    for tok in &instruction.tokens {
        let (len, rows) = char_rows(&tok.text, channels);
        let char_mat = tape.leaf(Tensor::from_vec(&[len, channels], rows).unwrap());
        let mut pooled = Vec::with_capacity(config.char_filter_sizes.len());
        for &size in &config.char_filter_sizes {
            let w = binder.var(tape, store, &format!("enc.char.conv{size}.w"));
            let b = binder.var(tape, store, &format!("enc.char.conv{size}.b"));
            pooled.push(tape.conv1d_maxpool(char_mat, w, b, size));
        }
        debug_assert_eq!(pooled.len() * filters, config.char_feature_dim);
        let char_feat = tape.concat(&pooled);

        let embed = vocab.embedding(vocab.word_id(&tok.text)).to_vec();
        embed_rows.push(embed.clone());
        let embed_var = tape.leaf(Tensor::from_vec(&[embed.len()], embed).unwrap());
        let joined = tape.concat(&[char_feat, embed_var]);
        let dropped = tape.dropout(joined, config.dropout_in, training, rng);
        inputs.push(dropped);
    }

    // Bidirectional LSTM over the token inputs.
    let h = config.encoder_hidden;
    let fw = LstmWeights {
        w: binder.var(tape, store, "enc.fw.w"),
        u: binder.var(tape, store, "enc.fw.u"),
        b: binder.var(tape, store, "enc.fw.b"),
    };
    let bw = LstmWeights {
        w: binder.var(tape, store, "enc.bw.w"),
        u: binder.var(tape, store, "enc.bw.u"),
        b: binder.var(tape, store, "enc.bw.b"),
    };
    let mut fw_states = Vec::with_capacity(n);
    let (mut hv, mut cv) = (tape.leaf(Tensor::zeros(&[h])), tape.leaf(Tensor::zeros(&[h])));
    for &x in &inputs {
        let (h2, c2) = lstm_cell(tape, fw, x, hv, cv, h);
        hv = h2;
        cv = c2;
        fw_states.push(hv);
    }
    let mut bw_states = vec![fw_states[0]; n];
    let (mut hv, mut cv) = (tape.leaf(Tensor::zeros(&[h])), tape.leaf(Tensor::zeros(&[h])));
    for i in (0..n).rev() {
        let (h2, c2) = lstm_cell(tape, bw, inputs[i], hv, cv, h);
        hv = h2;
        cv = c2;
        bw_states[i] = hv;
    }

    let phi = phi_features(instruction);
    let mut enc_rows = Vec::with_capacity(n);
    let mut attend_rows = Vec::with_capacity(n);
    let mut context_rows = Vec::with_capacity(n);
    for i in 0..n {
        let e = tape.concat(&[fw_states[i], bw_states[i]]);
        let e = tape.dropout(e, config.dropout_out, training, rng);
        enc_rows.push(e);
        let phi_var = tape.leaf(Tensor::from_vec(&[PHI_DIM], phi[i].clone()).unwrap());
        attend_rows.push(tape.concat(&[e, phi_var]));
        let w_var = tape.leaf(
            Tensor::from_vec(&[config.word_embed_dim], embed_rows[i].clone()).unwrap(),
        );
        context_rows.push(tape.concat(&[w_var, attend_rows[i]]));
    }

    let word_embeds = {
        let flat: Vec<f64> = embed_rows.into_iter().flatten().collect();
        tape.leaf(Tensor::from_vec(&[n, config.word_embed_dim], flat).unwrap())
    };
    let enc_states = tape.stack_rows(&enc_rows);
    let attend_feats = tape.stack_rows(&attend_rows);
    let context_feats = tape.stack_rows(&context_rows);

    Ok(EncoderOutput {
        word_embeds,
        enc_states,
        attend_feats,
        context_feats,
        n,
    })
}
