//! End-to-end gradient verification: analytic gradients of the joint loss
//! against central finite differences, per parameter group, on a tiny
//! random model and a 3-token sentence.

use super::{crf_nll, decode_unroll, encode, init_params, state_loss, Binder, ModelConfig, ModelError};
use crate::corpus::{tokenize, Action, ActionSeq, Instruction, StateSeq, Vocabulary};
use crate::numerics::{ParamStore, Tape};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const GRADCHECK_TOLERANCE: f64 = 1e-4;
const FD_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// (parameter name, max relative error within the group).
    pub groups: Vec<(String, f64)>,
    pub max_relative_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_relative_error < GRADCHECK_TOLERANCE
    }
}

fn fixture(seed: u64) -> (ModelConfig, ParamStore, Vocabulary, Instruction) {
    let config = ModelConfig::tiny(8);
    let store = init_params(&config, seed);
    let vocab = Vocabulary::from_words(
        ["go", "to", "lamp"].iter().map(|s| s.to_string()).collect(),
        8,
        seed,
    );
    let instruction = Instruction {
        tokens: tokenize("go to lamp"),
        raw_text: "go to lamp".into(),
        sentence_boundaries: vec![],
        gold_actions: Some(
            ActionSeq::new(vec![Action::Forward, Action::Left, Action::Stop]).unwrap(),
        ),
        gold_states: Some(
            StateSeq::new(vec![vec![0, 0, 1], vec![0, 1, 0], vec![0, 0, 0]]).unwrap(),
        ),
        route_id: "gradcheck".into(),
        sentence_id: 0,
        start_pose: None,
        goal_xyz: None,
    };
    (config, store, vocab, instruction)
}

fn joint_loss(
    store: &ParamStore,
    config: &ModelConfig,
    vocab: &Vocabulary,
    instruction: &Instruction,
    with_grads: bool,
) -> Result<(f64, Option<(Tape, Binder, crate::numerics::Var)>), ModelError> {
    let mut tape = Tape::new(with_grads);
    let mut binder = Binder::new();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let gold_actions = instruction.gold_actions.as_ref().unwrap();
    let gold_states = instruction.gold_states.as_ref().unwrap();
    let enc = encode(
        &mut tape,
        &mut binder,
        store,
        config,
        instruction,
        vocab,
        false,
        &mut rng,
    )?;
    let unroll = decode_unroll(&mut tape, &mut binder, store, config, &enc, gold_actions.len());
    let trans = binder.var(&mut tape, store, "crf.trans");
    let action_loss = crf_nll(&mut tape, &unroll.emissions, trans, gold_actions)?;
    let landmark_loss = state_loss(&mut tape, &unroll.state_scores, gold_states)?;
    let loss = tape.add(action_loss, landmark_loss);
    let value = tape.value(loss).item();
    Ok((value, with_grads.then_some((tape, binder, loss))))
}

/// Run the finite-difference comparison over every parameter group.
/// `sabotage` perturbs the named group's analytic gradient, for negative
/// controls in tests.
pub fn run_gradcheck(seed: u64, sabotage: Option<&str>) -> Result<GradCheckReport, ModelError> {
    let (config, mut store, vocab, instruction) = fixture(seed);

    // Analytic gradients.
    let (_, ctx) = joint_loss(&store, &config, &vocab, &instruction, true)?;
    let (tape, binder, loss) = ctx.unwrap();
    store.zero_grads();
    binder.accumulate_grads(&tape, loss, &mut store)?;
    let mut analytic: std::collections::BTreeMap<String, Vec<f64>> = store
        .names()
        .map(|n| (n.to_string(), store.get(n).unwrap().grad().unwrap().to_vec()))
        .collect();
    if let Some(name) = sabotage {
        let g = analytic
            .get_mut(name)
            .unwrap_or_else(|| panic!("no parameter group {name:?}"));
        for v in g.iter_mut() {
            *v += 0.5;
        }
    }

    // Central finite differences, parameter by parameter.
    let names: Vec<String> = store.names().map(str::to_string).collect();
    let mut groups = Vec::with_capacity(names.len());
    let mut max_rel: f64 = 0.0;
    for name in names {
        let len = store.get(&name).unwrap().len();
        let mut group_max: f64 = 0.0;
        for i in 0..len {
            let original = store.get(&name).unwrap().data()[i];
            store.get_mut(&name).unwrap().data_mut()[i] = original + FD_EPSILON;
            let (plus, _) = joint_loss(&store, &config, &vocab, &instruction, false)?;
            store.get_mut(&name).unwrap().data_mut()[i] = original - FD_EPSILON;
            let (minus, _) = joint_loss(&store, &config, &vocab, &instruction, false)?;
            store.get_mut(&name).unwrap().data_mut()[i] = original;
            let fd = (plus - minus) / (2.0 * FD_EPSILON);
            let a = analytic[&name][i];
            let denom = a.abs().max(fd.abs()).max(1e-4);
            group_max = group_max.max((a - fd).abs() / denom);
        }
        max_rel = max_rel.max(group_max);
        groups.push((name, group_max));
    }

    Ok(GradCheckReport {
        groups,
        max_relative_error: max_rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn analytic_gradients_match_finite_differences_end_to_end() {
        let report = run_gradcheck(12, None).unwrap();
        assert!(
            report.passed(),
            "max relative error {}",
            report.max_relative_error
        );
        assert!(!report.groups.is_empty());
    }

    #[test]
    fn sabotaged_gradient_fails_the_check() {
        let report = run_gradcheck(12, Some("crf.trans")).unwrap();
        assert!(!report.passed());
        let bad = report
            .groups
            .iter()
            .find(|(n, _)| n == "crf.trans")
            .unwrap();
        assert!(bad.1 > GRADCHECK_TOLERANCE);
    }

    #[test]
    fn report_lists_every_parameter_group() {
        let report = run_gradcheck(5, None).unwrap();
        let (config, ..) = fixture(5);
        let expected = crate::model::parameter_shapes(&config).len();
        assert_eq!(report.groups.len(), expected);
    }
}
