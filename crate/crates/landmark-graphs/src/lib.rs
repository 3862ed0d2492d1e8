//! Landmark graphs from natural-language route instructions.
//!
//! The pipeline: a route instruction is encoded (character CNN + frozen
//! word embeddings + bidirectional LSTM), a decoder with separate action
//! and landmark attention heads emits per-step action scores and landmark
//! token scores, a linear-chain CRF decodes the action sequence, and the
//! resulting (actions, states) pairs are assembled into landmark graphs
//! that can be exported, simulated, and scored against gold graphs with an
//! exact graph edit distance.
//!
//! Start with the runnable programs under `examples/`; the `lmg` binary
//! wires the same pieces into train/predict/evaluate subcommands.

pub mod cli;
pub mod corpus;
pub mod graphgen;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod simulator;

pub use corpus::{Action, ActionSeq, Corpus, Instruction, StateSeq, Token, Vocabulary};
pub use graphgen::LandmarkGraph;
pub use model::{ModelConfig, Prediction};
pub use numerics::{ParamStore, Tape, Tensor};
