//! Dual attention and the decoder unroll.
//!
//! Each head scores token i at step t as
//! `beta_ti = score . tanh(W d_{t-1} + U w_i + V [e_i, phi_i])`;
//! the action head turns its row into softmax weights and a context vector
//! `z^a_t = sum_i alpha_ti [w_i, e_i, phi_i]`, the state head additionally
//! keeps the raw scores, which are the landmark logits. The decoder LSTM
//! consumes `[z^a_t, z^s_t]` only, so the unroll never depends on emitted
//! actions and the full lattice can be scored afterwards.

use super::encoder::EncoderOutput;
use super::{Binder, ModelConfig, ModelError};
use crate::corpus::StateSeq;
use crate::numerics::{lstm_cell, LstmWeights, ParamStore, Tape, Tensor, Var};

/// One attention head with its per-sentence precomputation:
/// `U w_i + V [e_i, phi_i]` is fixed across steps, only `W d_{t-1}` moves.
struct AttentionHead {
    w_dec: Var,
    score: Var,
    precomputed: Var,
}

impl AttentionHead {
    fn bind(
        tape: &mut Tape,
        binder: &mut Binder,
        store: &ParamStore,
        enc: &EncoderOutput,
        name: &str,
    ) -> AttentionHead {
        let w_dec = binder.var(tape, store, &format!("att.{name}.w"));
        let u_word = binder.var(tape, store, &format!("att.{name}.u"));
        let v_feat = binder.var(tape, store, &format!("att.{name}.v"));
        let score = binder.var(tape, store, &format!("att.{name}.score"));
        let uw = tape.matmul(enc.word_embeds, u_word);
        let vf = tape.matmul(enc.attend_feats, v_feat);
        let precomputed = tape.add(uw, vf);
        AttentionHead {
            w_dec,
            score,
            precomputed,
        }
    }

    /// Score row for one step given the previous decoder state; returns
    /// (beta, context).
    fn attend(&self, tape: &mut Tape, enc: &EncoderOutput, d_prev: Var) -> (Var, Var) {
        let wd = tape.matmul(d_prev, self.w_dec);
        let pre = tape.add_row(self.precomputed, wd);
        let act = tape.tanh(pre);
        let beta = tape.matmul(act, self.score);
        let alpha = tape.softmax_rows(beta);
        let context = tape.matmul(alpha, enc.context_feats);
        (beta, context)
    }
}

/// Per-step decoder outputs over an unrolled lattice.
pub struct Unroll {
    /// Unary action scores, one 9-wide row per step.
    pub emissions: Vec<Var>,
    /// Raw state-head scores, one n-wide row per step.
    pub state_scores: Vec<Var>,
}

/// Unroll the decoder for `steps` steps from a zero initial state. The
/// first attention query uses the zero state d_0. No ground-truth world
/// state is ever concatenated in.
pub fn decode_unroll(
    tape: &mut Tape,
    binder: &mut Binder,
    store: &ParamStore,
    config: &ModelConfig,
    enc: &EncoderOutput,
    steps: usize,
) -> Unroll {
    let action_head = AttentionHead::bind(tape, binder, store, enc, "act");
    let state_head = AttentionHead::bind(tape, binder, store, enc, "state");
    let dec = LstmWeights {
        w: binder.var(tape, store, "dec.w"),
        u: binder.var(tape, store, "dec.u"),
        b: binder.var(tape, store, "dec.b"),
    };
    let unary_w = binder.var(tape, store, "crf.unary.w");
    let unary_b = binder.var(tape, store, "crf.unary.b");

    let dh = config.decoder_hidden;
    let mut d = tape.leaf(Tensor::zeros(&[dh]));
    let mut c = tape.leaf(Tensor::zeros(&[dh]));
    let mut emissions = Vec::with_capacity(steps);
    let mut state_scores = Vec::with_capacity(steps);
    for _ in 0..steps {
        let (_, z_action) = action_head.attend(tape, enc, d);
        let (beta_state, z_state) = state_head.attend(tape, enc, d);
        let z = tape.concat(&[z_action, z_state]);
        let (d2, c2) = lstm_cell(tape, dec, z, d, c, dh);
        d = d2;
        c = c2;
        let proj = tape.matmul(d, unary_w);
        let mu = tape.add(proj, unary_b);
        emissions.push(mu);
        state_scores.push(beta_state);
    }
    Unroll {
        emissions,
        state_scores,
    }
}

/// Sigmoid cross entropy of the state scores against the gold state
/// vectors, summed over the gold steps only; rows past the gold length are
/// unsupervised.
pub fn state_loss(
    tape: &mut Tape,
    state_scores: &[Var],
    gold: &StateSeq,
) -> Result<Var, ModelError> {
    if gold.len() > state_scores.len() {
        return Err(ModelError::Config(format!(
            "{} gold state rows but only {} decoded steps",
            gold.len(),
            state_scores.len()
        )));
    }
    let mut parts = Vec::with_capacity(gold.len());
    for (scores, bits) in state_scores.iter().zip(gold.states()) {
        let n = tape.value(*scores).len();
        if bits.len() != n {
            return Err(ModelError::Config(format!(
                "state vector has {} bits for {n} tokens",
                bits.len()
            )));
        }
        let targets: Vec<f64> = bits.iter().map(|b| *b as f64).collect();
        parts.push(tape.sigmoid_xent(*scores, &targets));
    }
    let stacked = tape.concat(&parts);
    Ok(tape.sum(stacked))
}
