//! Canonical corpus file format: one JSON record per line.
//!
//! Required fields are `route_id`, `sentence_id`, and `text`. Tokens are
//! derived from `text` unless given explicitly; `actions` uses the
//! single-letter codes plus `"STOP"`; `states` is a list of 0/1 lists.

use super::{tokenize, Action, ActionSeq, Corpus, CorpusError, Instruction, StateSeq, Token};
use crate::simulator::Pose;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Record {
    route_id: String,
    sentence_id: u32,
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tokens: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pos: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sentence_boundaries: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    actions: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    states: Option<Vec<Vec<u8>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    start_pose: Option<Pose>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    goal_xyz: Option<[i64; 3]>,
}

fn record_to_instruction(rec: Record, line: usize) -> Result<Instruction, CorpusError> {
    let mut tokens: Vec<Token> = match rec.tokens {
        Some(texts) => {
            for t in &texts {
                if t.is_empty() || t.chars().any(char::is_whitespace) {
                    return Err(CorpusError::Malformed {
                        line,
                        msg: format!("bad token {t:?}: empty or contains whitespace"),
                    });
                }
            }
            texts
                .into_iter()
                .enumerate()
                .map(|(index, text)| Token {
                    text,
                    index,
                    pos_tag: None,
                })
                .collect()
        }
        None => tokenize(&rec.text),
    };
    if let Some(pos) = rec.pos {
        if pos.len() != tokens.len() {
            return Err(CorpusError::Malformed {
                line,
                msg: format!("{} POS tags for {} tokens", pos.len(), tokens.len()),
            });
        }
        for (tok, tag) in tokens.iter_mut().zip(pos) {
            if super::pos_index(&tag).is_none() {
                return Err(CorpusError::Malformed {
                    line,
                    msg: format!("POS tag {tag:?} is not in the universal set"),
                });
            }
            tok.pos_tag = Some(tag);
        }
    }

    let gold_actions = match rec.actions {
        Some(codes) => {
            let actions = codes
                .iter()
                .map(|c| Action::from_code(c))
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| CorpusError::Malformed {
                    line,
                    msg: e.to_string(),
                })?;
            Some(ActionSeq::new(actions).map_err(|e| CorpusError::Malformed {
                line,
                msg: e.to_string(),
            })?)
        }
        None => None,
    };
    let gold_states = match rec.states {
        Some(rows) => Some(StateSeq::new(rows).map_err(|e| CorpusError::Malformed {
            line,
            msg: e.to_string(),
        })?),
        None => None,
    };

    let ins = Instruction {
        tokens,
        raw_text: rec.text,
        sentence_boundaries: rec.sentence_boundaries.unwrap_or_default(),
        gold_actions,
        gold_states,
        route_id: rec.route_id,
        sentence_id: rec.sentence_id,
        start_pose: rec.start_pose,
        goal_xyz: rec.goal_xyz,
    };
    ins.validate()?;
    Ok(ins)
}

fn instruction_to_record(ins: &Instruction) -> Record {
    let derived = tokenize(&ins.raw_text);
    let tokens_match_text = derived.len() == ins.tokens.len()
        && derived
            .iter()
            .zip(&ins.tokens)
            .all(|(a, b)| a.text == b.text);
    let has_pos = ins.tokens.iter().any(|t| t.pos_tag.is_some());
    Record {
        route_id: ins.route_id.clone(),
        sentence_id: ins.sentence_id,
        text: ins.raw_text.clone(),
        tokens: if tokens_match_text {
            None
        } else {
            Some(ins.token_texts())
        },
        pos: if has_pos {
            Some(
                ins.tokens
                    .iter()
                    .map(|t| t.pos_tag.clone().unwrap_or_else(|| "X".into()))
                    .collect(),
            )
        } else {
            None
        },
        sentence_boundaries: if ins.sentence_boundaries.is_empty() {
            None
        } else {
            Some(ins.sentence_boundaries.clone())
        },
        actions: ins
            .gold_actions
            .as_ref()
            .map(|a| a.actions().iter().map(|x| x.code().to_string()).collect()),
        states: ins.gold_states.as_ref().map(|s| s.states().to_vec()),
        start_pose: ins.start_pose,
        goal_xyz: ins.goal_xyz,
    }
}

/// Parse one canonical record line into an instruction.
pub fn parse_record_line(line: &str, line_no: usize) -> Result<Instruction, CorpusError> {
    let rec: Record = serde_json::from_str(line).map_err(|e| CorpusError::Malformed {
        line: line_no,
        msg: e.to_string(),
    })?;
    record_to_instruction(rec, line_no)
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus, CorpusError> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut instructions = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| CorpusError::Malformed {
            line: line_no,
            msg: e.to_string(),
        })?;
        instructions.push(record_to_instruction(rec, line_no)?);
    }
    Ok(Corpus {
        instructions,
        folds: Vec::new(),
    })
}

/// Render the corpus in canonical line-delimited form. Derivable fields
/// (tokens equal to `tokenize(text)`) are omitted, so canonical files
/// round-trip byte for byte.
pub fn serialize_corpus(corpus: &Corpus) -> String {
    let mut out = String::new();
    for ins in &corpus.instructions {
        let rec = instruction_to_record(ins);
        out.push_str(&serde_json::to_string(&rec).expect("record serialization"));
        out.push('\n');
    }
    out
}

pub fn save_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<(), CorpusError> {
    let mut file = std::fs::File::create(path.as_ref())?;
    file.write_all(serialize_corpus(corpus).as_bytes())?;
    Ok(())
}
