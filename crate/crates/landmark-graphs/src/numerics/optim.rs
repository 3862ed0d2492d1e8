//! Named parameter store with Adam state, plus the exponential
//! learning-rate schedule.

use super::{NumericsError, Tensor};
use std::collections::BTreeMap;

const BETA1: f64 = 0.9;
const BETA2: f64 = 0.999;
const EPS: f64 = 1e-8;

#[derive(Debug, Clone)]
struct ParamEntry {
    tensor: Tensor,
    m: Vec<f64>,
    v: Vec<f64>,
}

/// Named parameters with per-parameter Adam moments and a global step
/// counter. Iteration order is the sorted name order, which keeps
/// checkpoints and updates deterministic.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: BTreeMap<String, ParamEntry>,
    step: u64,
}

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn insert(&mut self, name: &str, mut tensor: Tensor) {
        tensor.ensure_grad();
        let len = tensor.len();
        self.entries.insert(
            name.to_string(),
            ParamEntry {
                tensor,
                m: vec![0.0; len],
                v: vec![0.0; len],
            },
        );
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name).map(|e| &e.tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name).map(|e| &mut e.tensor)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.entries.values().map(|e| e.tensor.len()).sum()
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub(crate) fn set_step(&mut self, step: u64) {
        self.step = step;
    }

    pub fn zero_grads(&mut self) {
        for entry in self.entries.values_mut() {
            entry.tensor.zero_grad();
        }
    }

    /// One Adam update over every parameter from its accumulated gradient.
    /// Gradients are left untouched; the step counter advances by one.
    pub fn adam_step(&mut self, lr: f64) -> Result<(), NumericsError> {
        for (name, entry) in &self.entries {
            let grad = entry.tensor.grad().expect("parameter without grad buffer");
            if grad.iter().any(|g| !g.is_finite()) {
                return Err(NumericsError::NonFiniteGrad(name.clone()));
            }
        }
        let t = (self.step + 1) as i32;
        let bias1 = 1.0 - BETA1.powi(t);
        let bias2 = 1.0 - BETA2.powi(t);
        for entry in self.entries.values_mut() {
            let grad = entry.tensor.grad().unwrap().to_vec();
            for (i, g) in grad.iter().enumerate() {
                entry.m[i] = BETA1 * entry.m[i] + (1.0 - BETA1) * g;
                entry.v[i] = BETA2 * entry.v[i] + (1.0 - BETA2) * g * g;
                let m_hat = entry.m[i] / bias1;
                let v_hat = entry.v[i] / bias2;
                entry.tensor.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + EPS);
            }
        }
        self.step += 1;
        Ok(())
    }
}

/// Continuous exponential decay: `init * rate^(step/steps)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExpDecay {
    pub init: f64,
    pub rate: f64,
    pub steps: f64,
}

impl Default for ExpDecay {
    fn default() -> Self {
        ExpDecay {
            init: 0.001,
            rate: 0.99,
            steps: 1000.0,
        }
    }
}

impl ExpDecay {
    pub fn at(&self, step: u64) -> f64 {
        self.init * self.rate.powf(step as f64 / self.steps)
    }
}

/// Learning rate at a global step under the default schedule.
pub fn lr_at(step: u64) -> f64 {
    ExpDecay::default().at(step)
}
