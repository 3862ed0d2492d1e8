//! Instruction corpus: data model, tokenization, the canonical record
//! format, SAIL action mapping, vocabulary and embeddings, fold splits,
//! and a synthetic route generator for desk-scale experiments.

mod folds;
mod format;
mod sail;
mod synth;
mod vocab;

pub use folds::make_folds;
pub use format::{load_corpus, parse_record_line, save_corpus, serialize_corpus};
pub use sail::{map_sail_actions, SailStep};
pub use synth::generate_synthetic;
pub use vocab::{char_id, load_embeddings, Vocabulary, CHAR_VOCAB, EMBED_DIM};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("route {route_id}/{sentence_id}: {msg}")]
    Invalid {
        route_id: String,
        sentence_id: u32,
        msg: String,
    },
    #[error("unknown action code {0:?}")]
    UnknownAction(String),
    #[error("SAIL action: {0}")]
    Sail(String),
    #[error("embedding file: {0}")]
    Embedding(String),
    #[error("cannot split corpus: {0}")]
    Split(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// The nine traversal actions, in fixed enum order. `Stop` terminates a
/// sequence; `Turn` and `Move` are underspecified movements resolved only
/// at simulation time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Action {
    Stand,
    Forward,
    Left,
    Right,
    Ascend,
    Descend,
    Turn,
    Move,
    Stop,
}

pub const NUM_ACTIONS: usize = 9;

impl Action {
    pub const ALL: [Action; NUM_ACTIONS] = [
        Action::Stand,
        Action::Forward,
        Action::Left,
        Action::Right,
        Action::Ascend,
        Action::Descend,
        Action::Turn,
        Action::Move,
        Action::Stop,
    ];

    /// Stable index used by the CRF label space and tie-breaking.
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|a| *a == self).unwrap()
    }

    pub fn from_index(i: usize) -> Option<Action> {
        Self::ALL.get(i).copied()
    }

    /// Single-letter wire code (`STOP` spelled out).
    pub fn code(self) -> &'static str {
        match self {
            Action::Stand => "s",
            Action::Forward => "f",
            Action::Left => "l",
            Action::Right => "r",
            Action::Ascend => "a",
            Action::Descend => "d",
            Action::Turn => "t",
            Action::Move => "m",
            Action::Stop => "STOP",
        }
    }

    pub fn from_code(code: &str) -> Result<Action, CorpusError> {
        match code {
            "s" => Ok(Action::Stand),
            "f" => Ok(Action::Forward),
            "l" => Ok(Action::Left),
            "r" => Ok(Action::Right),
            "a" => Ok(Action::Ascend),
            "d" => Ok(Action::Descend),
            "t" => Ok(Action::Turn),
            "m" => Ok(Action::Move),
            "STOP" => Ok(Action::Stop),
            other => Err(CorpusError::UnknownAction(other.to_string())),
        }
    }
}

impl std::fmt::Display for Action {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.code())
    }
}

/// An action sequence. `Stop`, when present, may only be the final element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSeq(Vec<Action>);

impl ActionSeq {
    pub fn new(actions: Vec<Action>) -> Result<Self, CorpusError> {
        if actions.is_empty() {
            return Err(CorpusError::Sail("empty action sequence".into()));
        }
        for (i, a) in actions.iter().enumerate() {
            if *a == Action::Stop && i + 1 != actions.len() {
                return Err(CorpusError::UnknownAction(format!(
                    "STOP at position {i} is not final"
                )));
            }
        }
        Ok(ActionSeq(actions))
    }

    pub fn actions(&self) -> &[Action] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn ends_with_stop(&self) -> bool {
        self.0.last() == Some(&Action::Stop)
    }
}

/// Per-step binary world states: one `{0,1}` vector over the input tokens
/// for each action step, marking which tokens name a nearby landmark.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateSeq(Vec<Vec<u8>>);

impl StateSeq {
    pub fn new(states: Vec<Vec<u8>>) -> Result<Self, CorpusError> {
        for row in &states {
            if row.iter().any(|b| *b > 1) {
                return Err(CorpusError::Sail("state bits must be 0 or 1".into()));
            }
        }
        Ok(StateSeq(states))
    }

    pub fn states(&self) -> &[Vec<u8>] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// The 17-tag universal part-of-speech set, used for the optional POS
/// one-hot block of the explicit word features.
pub const UNIVERSAL_POS: [&str; 17] = [
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM", "PART", "PRON", "PROPN",
    "PUNCT", "SCONJ", "SYM", "VERB", "X",
];

pub fn pos_index(tag: &str) -> Option<usize> {
    UNIVERSAL_POS.iter().position(|t| *t == tag)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    pub text: String,
    /// 0-based position in the sentence.
    pub index: usize,
    pub pos_tag: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Instruction {
    pub tokens: Vec<Token>,
    pub raw_text: String,
    /// Token indices where sentences start; empty means a single sentence.
    pub sentence_boundaries: Vec<usize>,
    pub gold_actions: Option<ActionSeq>,
    pub gold_states: Option<StateSeq>,
    pub route_id: String,
    pub sentence_id: u32,
    /// Optional grid coordinates (SAIL-style corpora).
    pub start_pose: Option<crate::simulator::Pose>,
    pub goal_xyz: Option<[i64; 3]>,
}

impl Instruction {
    pub fn token_texts(&self) -> Vec<String> {
        self.tokens.iter().map(|t| t.text.clone()).collect()
    }

    /// Check the cross-field invariants; used by the loader and the
    /// synthetic generator.
    pub fn validate(&self) -> Result<(), CorpusError> {
        let err = |msg: String| CorpusError::Invalid {
            route_id: self.route_id.clone(),
            sentence_id: self.sentence_id,
            msg,
        };
        let n = self.tokens.len();
        for w in self.sentence_boundaries.windows(2) {
            if w[1] <= w[0] {
                return Err(err("sentence boundaries not strictly increasing".into()));
            }
        }
        if let Some(&last) = self.sentence_boundaries.last() {
            if last >= n {
                return Err(err(format!(
                    "sentence boundary {last} out of range for {n} tokens"
                )));
            }
        }
        match (&self.gold_actions, &self.gold_states) {
            (Some(a), Some(s)) => {
                if a.len() != s.len() {
                    return Err(err(format!(
                        "gold length mismatch: {} actions vs {} states",
                        a.len(),
                        s.len()
                    )));
                }
                for (t, row) in s.states().iter().enumerate() {
                    if row.len() != n {
                        return Err(err(format!(
                            "state vector at step {t} has length {} for {n} tokens",
                            row.len()
                        )));
                    }
                }
                if !a.ends_with_stop() {
                    return Err(err("gold action sequence does not end with STOP".into()));
                }
            }
            (Some(a), None) => {
                if !a.ends_with_stop() {
                    return Err(err("gold action sequence does not end with STOP".into()));
                }
            }
            (None, Some(_)) => {
                return Err(err("gold states present without gold actions".into()));
            }
            (None, None) => {}
        }
        Ok(())
    }
}

/// One train/dev/test partition of instruction indices. Splits are by
/// route: every sentence of a route lands in the same side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub train: Vec<usize>,
    pub dev: Vec<usize>,
    pub test: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub struct Corpus {
    pub instructions: Vec<Instruction>,
    /// Populated by [`make_folds`]; empty until then.
    pub folds: Vec<FoldSplit>,
}

impl Corpus {
    pub fn len(&self) -> usize {
        self.instructions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instructions.is_empty()
    }

    /// Route ids in first-appearance order.
    pub fn route_ids(&self) -> Vec<String> {
        let mut seen = std::collections::HashSet::new();
        let mut out = Vec::new();
        for ins in &self.instructions {
            if seen.insert(ins.route_id.clone()) {
                out.push(ins.route_id.clone());
            }
        }
        out
    }
}

/// Split raw text into tokens: maximal alphanumeric runs, or single
/// punctuation characters. Whitespace separates; case is preserved.
pub fn tokenize(raw: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    let push = |s: &mut String, tokens: &mut Vec<Token>| {
        if !s.is_empty() {
            let text = std::mem::take(s);
            tokens.push(Token {
                text,
                index: tokens.len(),
                pos_tag: None,
            });
        }
    };
    for ch in raw.chars() {
        if ch.is_alphanumeric() {
            current.push(ch);
        } else {
            push(&mut current, &mut tokens);
            if !ch.is_whitespace() {
                tokens.push(Token {
                    text: ch.to_string(),
                    index: tokens.len(),
                    pos_tag: None,
                });
            }
        }
    }
    push(&mut current, &mut tokens);
    tokens
}
