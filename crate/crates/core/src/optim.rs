//! First-order optimizers over flat parameter tensors.

use serde::{Deserialize, Serialize};

use crate::params::{Gradients, Model};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    step: u64,
    first: Gradients,
    second: Gradients,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, model: &Model) -> Self {
        let (first, second) = match kind {
            OptimizerKind::Sgd => (Vec::new(), Vec::new()),
            OptimizerKind::Adam { .. } => (model.zero_gradients(), model.zero_gradients()),
        };
        Optimizer {
            kind,
            lr,
            step: 0,
            first,
            second,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, model: &mut Model, grads: &Gradients) {
        self.step += 1;
        match self.kind {
            OptimizerKind::Sgd => {
                for (t, g) in model.tensors.iter_mut().zip(grads) {
                    for (p, gi) in t.data.iter_mut().zip(g) {
                        *p -= self.lr * gi;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.step as i32);
                let c2 = 1.0 - beta2.powi(self.step as i32);
                for (((t, g), m), v) in model
                    .tensors
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for (((p, &gi), mi), vi) in
                        t.data.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut())
                    {
                        *mi = beta1 * *mi + (1.0 - beta1) * gi;
                        *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                        let mhat = *mi / c1;
                        let vhat = *vi / c2;
                        *p -= self.lr * mhat / (vhat.sqrt() + eps);
                    }
                }
            }
        }
    }
}
