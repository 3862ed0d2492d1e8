//! Word/character vocabulary and the frozen embedding table.

use super::{Corpus, CorpusError};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use std::collections::HashMap;
use std::io::{BufRead, BufReader};
use std::path::Path;

/// Dimension of the pre-trained word vectors.
pub const EMBED_DIM: usize = 300;

/// Character ids cover printable ASCII (0x20..=0x7E) plus one OTHER slot.
pub const CHAR_VOCAB: usize = 96;

pub fn char_id(c: char) -> usize {
    let code = c as u32;
    if (0x20..=0x7e).contains(&code) {
        (code - 0x20) as usize
    } else {
        CHAR_VOCAB - 1
    }
}

/// Word and character lookup plus the embedding table. Word id 0 is the
/// unknown word. Embeddings are frozen: training never updates them, and
/// out-of-vocabulary rows are seeded uniform(-0.05, 0.05) draws that depend
/// only on (seed, word), not on file or iteration order.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    words: Vec<String>,
    index: HashMap<String, usize>,
    embed_dim: usize,
    embeddings: Vec<f64>,
}

impl Vocabulary {
    /// Build from every token in the corpus (sorted for determinism), with
    /// all rows seeded randomly. `load_embeddings` replaces in-file rows.
    pub fn from_corpus(corpus: &Corpus, seed: u64) -> Vocabulary {
        let mut uniq: Vec<String> = corpus
            .instructions
            .iter()
            .flat_map(|ins| ins.tokens.iter().map(|t| t.text.clone()))
            .collect();
        uniq.sort();
        uniq.dedup();
        Vocabulary::from_words(uniq, EMBED_DIM, seed)
    }

    /// Internal constructor; `dim` is 300 for every corpus-facing path but
    /// kept flexible so tiny diagnostic models stay cheap.
    pub fn from_words(words: Vec<String>, dim: usize, seed: u64) -> Vocabulary {
        let mut all = vec!["<unk>".to_string()];
        all.extend(words);
        let mut index = HashMap::new();
        for (i, w) in all.iter().enumerate() {
            index.entry(w.clone()).or_insert(i);
        }
        let mut embeddings = vec![0.0; all.len() * dim];
        for (i, w) in all.iter().enumerate() {
            fill_seeded_row(&mut embeddings[i * dim..(i + 1) * dim], seed, w);
        }
        Vocabulary {
            words: all,
            index,
            embed_dim: dim,
            embeddings,
        }
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    /// Id for a word; 0 (unknown) when absent.
    pub fn word_id(&self, word: &str) -> usize {
        self.index.get(word).copied().unwrap_or(0)
    }

    pub fn word(&self, id: usize) -> &str {
        &self.words[id]
    }

    pub fn embedding(&self, id: usize) -> &[f64] {
        &self.embeddings[id * self.embed_dim..(id + 1) * self.embed_dim]
    }

    /// Stable fingerprint of the word list and embedding source, folded
    /// into checkpoint config hashes.
    pub fn fingerprint(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update(self.embed_dim.to_le_bytes());
        for w in &self.words {
            hasher.update(w.as_bytes());
            hasher.update([0u8]);
        }
        for v in &self.embeddings {
            hasher.update(v.to_le_bytes());
        }
        hex(&hasher.finalize()[..8])
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Deterministic per-word row: the generator is seeded from
/// sha256(seed, word), so a word's vector never depends on load order.
fn fill_seeded_row(row: &mut [f64], seed: u64, word: &str) {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(word.as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha8Rng::from_seed(key);
    for v in row.iter_mut() {
        *v = rng.gen_range(-0.05..0.05);
    }
}

/// Overlay pre-trained vectors from a whitespace-separated text file
/// (word followed by 300 floats per line). Words not in the file keep
/// their seeded rows.
pub fn load_embeddings(path: impl AsRef<Path>, vocab: &Vocabulary) -> Result<Vocabulary, CorpusError> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut out = vocab.clone();
    if out.embed_dim != EMBED_DIM {
        return Err(CorpusError::Embedding(format!(
            "vocabulary has dimension {}, expected {EMBED_DIM}",
            out.embed_dim
        )));
    }
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let word = match parts.next() {
            Some(w) => w.to_string(),
            None => continue,
        };
        let values: Vec<f64> = parts
            .map(|p| {
                p.parse::<f64>().map_err(|_| {
                    CorpusError::Embedding(format!("word {word:?}: non-numeric value {p:?}"))
                })
            })
            .collect::<Result<_, _>>()?;
        if values.len() != EMBED_DIM {
            return Err(CorpusError::Embedding(format!(
                "word {word:?}: {} values, expected {EMBED_DIM}",
                values.len()
            )));
        }
        if let Some(&id) = out.index.get(&word) {
            out.embeddings[id * EMBED_DIM..(id + 1) * EMBED_DIM].copy_from_slice(&values);
        }
    }
    Ok(out)
}
