//! Three-fold 80/10/10 splits by route.

use super::{Corpus, CorpusError, FoldSplit};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

pub const NUM_FOLDS: usize = 3;

/// Attach three train/dev/test partitions to the corpus. Routes are
/// shuffled once under `seed`; fold k takes the k-th tenth as test and the
/// following tenth as dev, so test segments differ across folds. All
/// sentences of a route stay in the same side.
pub fn make_folds(mut corpus: Corpus, seed: u64) -> Result<Corpus, CorpusError> {
    if corpus.is_empty() {
        return Err(CorpusError::Split("corpus is empty".into()));
    }
    let routes = corpus.route_ids();
    if routes.len() < 10 {
        return Err(CorpusError::Split(format!(
            "need at least 10 routes for an 80/10/10 split, have {}",
            routes.len()
        )));
    }
    let mut order = routes.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);

    let mut by_route: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, ins) in corpus.instructions.iter().enumerate() {
        by_route.entry(ins.route_id.as_str()).or_default().push(i);
    }

    let n = order.len();
    let tenth = (n / 10).max(1);
    let mut folds = Vec::with_capacity(NUM_FOLDS);
    for k in 0..NUM_FOLDS {
        let mut split = FoldSplit {
            train: Vec::new(),
            dev: Vec::new(),
            test: Vec::new(),
        };
        let test_start = k * tenth;
        let dev_start = (k + 1) * tenth;
        let train_start = (k + 2) * tenth;
        for (pos, route) in order.iter().enumerate() {
            // Positions are circular so every fold sees full-size segments.
            let rel = (pos + n - test_start) % n;
            let side = if rel < dev_start - test_start {
                &mut split.test
            } else if rel < train_start - test_start {
                &mut split.dev
            } else {
                &mut split.train
            };
            side.extend(by_route[route.as_str()].iter().copied());
        }
        split.train.sort_unstable();
        split.dev.sort_unstable();
        split.test.sort_unstable();
        folds.push(split);
    }
    corpus.folds = folds;
    Ok(corpus)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{tokenize, Instruction};

    fn corpus_with_routes(n: usize) -> Corpus {
        let instructions = (0..n)
            .map(|i| Instruction {
                tokens: tokenize("go forward ."),
                raw_text: "go forward .".into(),
                sentence_boundaries: vec![],
                gold_actions: None,
                gold_states: None,
                route_id: format!("route-{i:03}"),
                sentence_id: 0,
                start_pose: None,
                goal_xyz: None,
            })
            .collect();
        Corpus {
            instructions,
            folds: Vec::new(),
        }
    }

    #[test]
    fn hundred_routes_split_80_10_10() {
        let corpus = make_folds(corpus_with_routes(100), 42).unwrap();
        assert_eq!(corpus.folds.len(), 3);
        for fold in &corpus.folds {
            assert_eq!(fold.test.len(), 10);
            assert_eq!(fold.dev.len(), 10);
            assert_eq!(fold.train.len(), 80);
        }
    }

    #[test]
    fn folds_are_deterministic_under_seed() {
        let a = make_folds(corpus_with_routes(37), 7).unwrap();
        let b = make_folds(corpus_with_routes(37), 7).unwrap();
        assert_eq!(a.folds, b.folds);
        let c = make_folds(corpus_with_routes(37), 8).unwrap();
        assert_ne!(a.folds, c.folds);
    }

    #[test]
    fn too_few_routes_is_an_error() {
        assert!(make_folds(corpus_with_routes(5), 1).is_err());
    }

    #[test]
    fn partitions_cover_and_are_disjoint() {
        let corpus = make_folds(corpus_with_routes(23), 3).unwrap();
        for fold in &corpus.folds {
            let mut all: Vec<usize> = fold
                .train
                .iter()
                .chain(&fold.dev)
                .chain(&fold.test)
                .copied()
                .collect();
            all.sort_unstable();
            let expected: Vec<usize> = (0..corpus.len()).collect();
            assert_eq!(all, expected);
        }
    }

    #[test]
    fn test_segments_differ_across_folds() {
        let corpus = make_folds(corpus_with_routes(50), 11).unwrap();
        assert_ne!(corpus.folds[0].test, corpus.folds[1].test);
        assert_ne!(corpus.folds[1].test, corpus.folds[2].test);
    }

    #[test]
    fn routes_are_not_split_across_sides() {
        // Two sentences per route.
        let mut corpus = corpus_with_routes(12);
        let extra: Vec<Instruction> = corpus
            .instructions
            .iter()
            .map(|ins| Instruction {
                sentence_id: 1,
                ..ins.clone()
            })
            .collect();
        corpus.instructions.extend(extra);
        let corpus = make_folds(corpus, 5).unwrap();
        for fold in &corpus.folds {
            for (name, side) in [("train", &fold.train), ("dev", &fold.dev), ("test", &fold.test)]
            {
                let routes: std::collections::HashSet<&str> = side
                    .iter()
                    .map(|&i| corpus.instructions[i].route_id.as_str())
                    .collect();
                for other in [&fold.train, &fold.dev, &fold.test] {
                    if std::ptr::eq(other, side) {
                        continue;
                    }
                    for &i in other.iter() {
                        assert!(
                            !routes.contains(corpus.instructions[i].route_id.as_str()),
                            "route leaked out of {name}"
                        );
                    }
                }
            }
        }
    }
}
