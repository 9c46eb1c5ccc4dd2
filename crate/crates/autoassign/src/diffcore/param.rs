//! Named learnable state that persists across computation records, plus the
//! SGD-with-momentum update.

use super::array::DiffArray;
use super::error::DiffResult;
use super::tape::Tape;

/// A named array of trainable state. Gradients accumulate across backward
/// passes until the next optimizer step; non-learnable parameters never
/// receive any.
#[derive(Debug, Clone)]
pub struct Parameter {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub learnable: bool,
    pub grad: Vec<f64>,
    velocity: Vec<f64>,
}

impl Parameter {
    pub fn new(
        name: impl Into<String>,
        shape: Vec<usize>,
        values: Vec<f64>,
        learnable: bool,
    ) -> Self {
        let n = values.len();
        debug_assert_eq!(n, shape.iter().product::<usize>());
        Parameter {
            name: name.into(),
            shape,
            values,
            learnable,
            grad: vec![0.0; n],
            velocity: vec![0.0; n],
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Registers this parameter as a tracked leaf on `tape`.
    pub fn bind(&self, tape: &Tape) -> DiffResult<DiffArray> {
        DiffArray::leaf(tape, self.shape.clone(), self.values.clone())
    }

    /// Snapshot as an untracked constant (inference, frozen priors).
    pub fn as_constant(&self) -> DiffArray {
        DiffArray::constant(self.shape.clone(), self.values.clone())
            .expect("parameter shape is valid")
    }

    /// Adds the gradient recorded for `bound` (a leaf made by `bind`) into
    /// this parameter's accumulator. No-op for non-learnable parameters or
    /// when no gradient reached the leaf.
    pub fn accumulate(&mut self, grads: &super::tape::Gradients, bound: &DiffArray) {
        if !self.learnable {
            return;
        }
        if let Some(g) = grads.wrt(bound) {
            for (dst, src) in self.grad.iter_mut().zip(g) {
                *dst += src;
            }
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn grad_norm_sq(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum()
    }
}

/// One SGD step over the given parameters:
/// `v <- momentum * v + grad + weight_decay * value; value <- value - lr * v`.
/// Gradients are cleared afterwards. Non-learnable parameters are skipped.
pub fn sgd_step<'a>(
    params: impl IntoIterator<Item = &'a mut Parameter>,
    learning_rate: f64,
    momentum: f64,
    weight_decay: f64,
) {
    for p in params {
        if !p.learnable {
            p.clear_grad();
            continue;
        }
        for i in 0..p.values.len() {
            let v = momentum * p.velocity[i] + p.grad[i] + weight_decay * p.values[i];
            p.velocity[i] = v;
            p.values[i] -= learning_rate * v;
            p.grad[i] = 0.0;
        }
    }
}
