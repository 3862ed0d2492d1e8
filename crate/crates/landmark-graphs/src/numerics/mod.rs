//! Dense f64 tensors with reverse-mode gradient accumulation, the layer
//! primitives the model needs (1-D convolution + max-pool, LSTM cell,
//! affine, tanh/sigmoid/softmax, dropout), the Adam optimizer, and the
//! checkpoint format.
//!
//! Everything is 64-bit: the corpora are tiny and gradient-check fidelity
//! matters more than speed. Tensors are value-like and sendable; a [`Tape`]
//! is confined to one thread.

mod checkpoint;
mod optim;
mod tape;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use optim::{lr_at, ExpDecay, ParamStore};
pub use tape::{lstm_cell, Gradients, LstmWeights, Tape, Var};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("backward called with gradients disabled")]
    GradientsDisabled,
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient in parameter {0:?}")]
    NonFiniteGrad(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// A dense tensor of 1 or 2 dimensions with an optional gradient buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![0.0; len],
            grad: None,
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Tensor, NumericsError> {
        let expected: usize = shape.iter().product();
        if data.len() != expected {
            return Err(NumericsError::Shape {
                op: "from_vec",
                lhs: shape.to_vec(),
                rhs: vec![data.len()],
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn scalar(v: f64) -> Tensor {
        Tensor {
            shape: vec![1],
            data: vec![v],
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    pub fn item(&self) -> f64 {
        debug_assert!(self.is_scalar());
        self.data[0]
    }

    /// Rows for a 2-D tensor, 1 for a vector.
    pub fn rows(&self) -> usize {
        if self.shape.len() == 2 {
            self.shape[0]
        } else {
            1
        }
    }

    /// Columns for a 2-D tensor, the length for a vector.
    pub fn cols(&self) -> usize {
        *self.shape.last().unwrap_or(&0)
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Ensure a zeroed gradient buffer exists.
    pub fn ensure_grad(&mut self) {
        if self.grad.is_none() {
            self.grad = Some(vec![0.0; self.data.len()]);
        }
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn accumulate_grad(&mut self, delta: &[f64]) {
        self.ensure_grad();
        let g = self.grad.as_mut().unwrap();
        debug_assert_eq!(g.len(), delta.len());
        for (gi, di) in g.iter_mut().zip(delta) {
            *gi += di;
        }
    }
}
