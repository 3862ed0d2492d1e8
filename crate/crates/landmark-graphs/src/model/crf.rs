//! Linear-chain CRF over the nine action labels: negative log likelihood
//! through the log-space forward algorithm (differentiable on the tape)
//! and exact Viterbi decoding.

use super::{ModelError, NUM_LABELS};
use crate::corpus::ActionSeq;
use crate::numerics::{Tape, Var};

/// -log P(gold | emissions) where
/// `P = exp(sum_t mu_t[a_t] + sum_t theta[a_t, a_{t+1}]) / zeta`
/// and `zeta` sums every label sequence of the gold length via the
/// forward recursion.
pub fn crf_nll(
    tape: &mut Tape,
    emissions: &[Var],
    transitions: Var,
    gold: &ActionSeq,
) -> Result<Var, ModelError> {
    let t_len = gold.len();
    if t_len == 0 {
        return Err(ModelError::Config("empty gold action sequence".into()));
    }
    if t_len > emissions.len() {
        return Err(ModelError::Config(format!(
            "gold length {t_len} exceeds the {} decoded steps",
            emissions.len()
        )));
    }

    // Score of the gold path.
    let mut parts = Vec::with_capacity(2 * t_len);
    for (t, action) in gold.actions().iter().enumerate() {
        parts.push(tape.pick(emissions[t], action.index()));
        if t + 1 < t_len {
            let next = gold.actions()[t + 1];
            parts.push(tape.pick(transitions, action.index() * NUM_LABELS + next.index()));
        }
    }
    let stacked = tape.concat(&parts);
    let gold_score = tape.sum(stacked);

    // log zeta by the forward algorithm in log space.
    let mut alpha = emissions[0];
    for mu in emissions.iter().take(t_len).skip(1) {
        let broadcast = tape.add_col(transitions, alpha);
        let reduced = tape.logsumexp_cols(broadcast);
        alpha = tape.add(reduced, *mu);
    }
    let log_zeta = tape.logsumexp(alpha);

    Ok(tape.sub(log_zeta, gold_score))
}

/// Best label path over the full lattice, with its score. Ties break
/// toward the lower label index.
pub fn viterbi(emissions: &[Vec<f64>], transitions: &[f64]) -> (Vec<usize>, f64) {
    assert!(!emissions.is_empty());
    debug_assert_eq!(transitions.len(), NUM_LABELS * NUM_LABELS);
    let t_len = emissions.len();
    let mut delta = emissions[0].clone();
    let mut backptr: Vec<[usize; NUM_LABELS]> = Vec::with_capacity(t_len);
    for mu in emissions.iter().skip(1) {
        let mut next = vec![f64::NEG_INFINITY; NUM_LABELS];
        let mut ptr = [0usize; NUM_LABELS];
        for (j, nj) in next.iter_mut().enumerate() {
            let mut best = f64::NEG_INFINITY;
            let mut best_i = 0;
            for (i, di) in delta.iter().enumerate() {
                let score = di + transitions[i * NUM_LABELS + j];
                if score > best {
                    best = score;
                    best_i = i;
                }
            }
            *nj = best + mu[j];
            ptr[j] = best_i;
        }
        backptr.push(ptr);
        delta = next;
    }
    let mut best = f64::NEG_INFINITY;
    let mut last = 0;
    for (j, dj) in delta.iter().enumerate() {
        if *dj > best {
            best = *dj;
            last = j;
        }
    }
    let mut path = vec![last; t_len];
    for (t, ptr) in backptr.iter().enumerate().rev() {
        path[t] = ptr[path[t + 1]];
    }
    (path, best)
}

/// Score of a concrete path under the lattice; used to cross-check the
/// Viterbi output.
pub fn path_score(emissions: &[Vec<f64>], transitions: &[f64], path: &[usize]) -> f64 {
    let mut score = 0.0;
    for (t, &label) in path.iter().enumerate() {
        score += emissions[t][label];
        if t + 1 < path.len() {
            score += transitions[label * NUM_LABELS + path[t + 1]];
        }
    }
    score
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Action;
    use crate::numerics::Tensor;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn leaf_rows(tape: &mut Tape, rows: &[Vec<f64>]) -> Vec<Var> {
        rows.iter()
            .map(|r| tape.leaf(Tensor::from_vec(&[r.len()], r.clone()).unwrap()))
            .collect()
    }

    /// Exhaustive enumeration over all 9^T label sequences.
    fn brute_force_log_zeta(emissions: &[Vec<f64>], transitions: &[f64]) -> f64 {
        let t_len = emissions.len();
        let mut total: Vec<f64> = Vec::new();
        let mut seq = vec![0usize; t_len];
        loop {
            let mut score = 0.0;
            for (t, &l) in seq.iter().enumerate() {
                score += emissions[t][l];
                if t + 1 < t_len {
                    score += transitions[l * NUM_LABELS + seq[t + 1]];
                }
            }
            total.push(score);
            let mut t = 0;
            loop {
                if t == t_len {
                    let max = total.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let sum: f64 = total.iter().map(|s| (s - max).exp()).sum();
                    return max + sum.ln();
                }
                seq[t] += 1;
                if seq[t] < NUM_LABELS {
                    break;
                }
                seq[t] = 0;
                t += 1;
            }
        }
    }

    fn brute_force_best(emissions: &[Vec<f64>], transitions: &[f64]) -> (Vec<usize>, f64) {
        let t_len = emissions.len();
        let mut best_score = f64::NEG_INFINITY;
        let mut best_seq = vec![0usize; t_len];
        let mut seq = vec![0usize; t_len];
        loop {
            let score = path_score(emissions, transitions, &seq);
            if score > best_score {
                best_score = score;
                best_seq = seq.clone();
            }
            let mut t = 0;
            loop {
                if t == t_len {
                    return (best_seq, best_score);
                }
                seq[t] += 1;
                if seq[t] < NUM_LABELS {
                    break;
                }
                seq[t] = 0;
                t += 1;
            }
        }
    }

    #[test]
    fn uniform_single_step_loss_is_log_nine() {
        let mut tape = Tape::new(false);
        let emissions = leaf_rows(&mut tape, &[vec![0.0; NUM_LABELS]]);
        let trans = tape.leaf(Tensor::zeros(&[NUM_LABELS, NUM_LABELS]));
        let gold = ActionSeq::new(vec![Action::Stop]).unwrap();
        let nll = crf_nll(&mut tape, &emissions, trans, &gold).unwrap();
        assert!((tape.value(nll).item() - 9f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn nll_matches_brute_force_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for t_len in 1..=3 {
            let emissions: Vec<Vec<f64>> = (0..t_len)
                .map(|_| (0..NUM_LABELS).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let trans: Vec<f64> = (0..NUM_LABELS * NUM_LABELS)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let gold_actions: Vec<Action> = (0..t_len - 1)
                .map(|_| Action::ALL[rng.gen_range(0..NUM_LABELS - 1)])
                .chain([Action::Stop])
                .collect();
            let gold = ActionSeq::new(gold_actions).unwrap();

            let mut tape = Tape::new(false);
            let rows = leaf_rows(&mut tape, &emissions);
            let tv = tape.leaf(Tensor::from_vec(&[NUM_LABELS, NUM_LABELS], trans.clone()).unwrap());
            let nll = crf_nll(&mut tape, &rows, tv, &gold).unwrap();

            let log_zeta = brute_force_log_zeta(&emissions, &trans);
            let gold_path: Vec<usize> = gold.actions().iter().map(|a| a.index()).collect();
            let expected = log_zeta - path_score(&emissions, &trans, &gold_path);
            assert!(
                (tape.value(nll).item() - expected).abs() < 1e-8,
                "T={t_len}: {} vs {expected}",
                tape.value(nll).item()
            );
        }
    }

    #[test]
    fn dominant_gold_path_drives_loss_to_zero() {
        let mut emissions = vec![vec![0.0; NUM_LABELS]; 3];
        let gold = ActionSeq::new(vec![Action::Forward, Action::Left, Action::Stop]).unwrap();
        for (t, a) in gold.actions().iter().enumerate() {
            emissions[t][a.index()] = 25.0;
        }
        let mut tape = Tape::new(false);
        let rows = leaf_rows(&mut tape, &emissions);
        let trans = tape.leaf(Tensor::zeros(&[NUM_LABELS, NUM_LABELS]));
        let nll = crf_nll(&mut tape, &rows, trans, &gold).unwrap();
        assert!(tape.value(nll).item() < 0.01);
        // exp(-nll) is a probability.
        assert!((-tape.value(nll).item()).exp() <= 1.0);
    }

    #[test]
    fn empty_gold_is_an_error() {
        assert!(ActionSeq::new(vec![]).is_err());
    }

    #[test]
    fn viterbi_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for t_len in 1..=3 {
            let emissions: Vec<Vec<f64>> = (0..t_len)
                .map(|_| (0..NUM_LABELS).map(|_| rng.gen_range(-2.0..2.0)).collect())
                .collect();
            let trans: Vec<f64> = (0..NUM_LABELS * NUM_LABELS)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect();
            let (path, score) = viterbi(&emissions, &trans);
            let (bpath, bscore) = brute_force_best(&emissions, &trans);
            assert_eq!(path, bpath);
            assert!((score - bscore).abs() < 1e-10);
            // The returned score is exactly the recomputed path score.
            assert_eq!(score, path_score(&emissions, &trans, &path));
        }
    }

    #[test]
    fn viterbi_ties_break_to_lower_index() {
        let emissions = vec![vec![0.0; NUM_LABELS]; 2];
        let trans = vec![0.0; NUM_LABELS * NUM_LABELS];
        let (path, _) = viterbi(&emissions, &trans);
        assert_eq!(path, vec![0, 0]);
    }

    #[test]
    fn crf_nll_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let t_len = 3;
        let theta: Vec<f64> = (0..t_len * NUM_LABELS + NUM_LABELS * NUM_LABELS)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let gold =
            ActionSeq::new(vec![Action::Forward, Action::Right, Action::Stop]).unwrap();

        let eval = |theta: &[f64]| -> (f64, Vec<f64>) {
            let mut tape = Tape::new(true);
            let rows: Vec<Var> = (0..t_len)
                .map(|t| {
                    tape.leaf(
                        Tensor::from_vec(
                            &[NUM_LABELS],
                            theta[t * NUM_LABELS..(t + 1) * NUM_LABELS].to_vec(),
                        )
                        .unwrap(),
                    )
                })
                .collect();
            let trans = tape.leaf(
                Tensor::from_vec(
                    &[NUM_LABELS, NUM_LABELS],
                    theta[t_len * NUM_LABELS..].to_vec(),
                )
                .unwrap(),
            );
            let nll = crf_nll(&mut tape, &rows, trans, &gold).unwrap();
            let grads = tape.backward(nll).unwrap();
            let mut flat = Vec::new();
            for r in &rows {
                flat.extend_from_slice(grads.wrt(*r));
            }
            flat.extend_from_slice(grads.wrt(trans));
            (tape.value(nll).item(), flat)
        };

        let (_, analytic) = eval(&theta);
        let eps = 1e-6;
        for i in 0..theta.len() {
            let mut plus = theta.clone();
            plus[i] += eps;
            let mut minus = theta.clone();
            minus[i] -= eps;
            let fd = (eval(&plus).0 - eval(&minus).0) / (2.0 * eps);
            let denom = analytic[i].abs().max(fd.abs()).max(1e-4);
            assert!(
                ((analytic[i] - fd) / denom).abs() < 1e-4,
                "param {i}: analytic {} vs fd {fd}",
                analytic[i]
            );
        }
    }
}
