use serde::{Deserialize, Serialize};

use super::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl OptimizerKind {
    pub fn adam() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.98, eps: 1e-9 }
    }
}

/// SGD or Adam over every trainable parameter in a store.
#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    /// Rescale gradients whose global norm exceeds this value.
    pub clip_norm: Option<f64>,
    steps: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Self {
        assert!(learning_rate > 0.0, "learning rate must be positive");
        Self { kind, learning_rate, clip_norm: None, steps: 0, first: Vec::new(), second: Vec::new() }
    }

    pub fn sgd(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Self {
        Self::new(OptimizerKind::adam(), learning_rate)
    }

    pub fn with_clip_norm(mut self, clip: f64) -> Self {
        self.clip_norm = Some(clip);
        self
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the accumulated gradients. Gradients are left
    /// in place; call [`ParamStore::zero_grad`] before the next backward.
    pub fn step(&mut self, store: &mut ParamStore) {
        self.steps += 1;
        let scale = match self.clip_norm {
            Some(clip) => {
                let norm = store.grad_norm();
                if norm > clip {
                    clip / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::Sgd => {
                for p in store.iter_mut().filter(|p| p.trainable) {
                    for (v, g) in p.value.data_mut().iter_mut().zip(&p.grad) {
                        *v -= lr * g * scale;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for (k, p) in store.iter_mut().enumerate() {
                    if self.first.len() <= k {
                        self.first.push(Vec::new());
                        self.second.push(Vec::new());
                    }
                    // Parameters may grow (vocabulary extension); moments follow.
                    let n = p.grad.len();
                    self.first[k].resize(n, 0.0);
                    self.second[k].resize(n, 0.0);
                    if !p.trainable {
                        continue;
                    }
                    let (m, s) = (&mut self.first[k], &mut self.second[k]);
                    for (i, v) in p.value.data_mut().iter_mut().enumerate() {
                        let g = p.grad[i] * scale;
                        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                        s[i] = beta2 * s[i] + (1.0 - beta2) * g * g;
                        let mh = m[i] / bc1;
                        let sh = s[i] / bc2;
                        *v -= lr * mh / (sh.sqrt() + eps);
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn sgd_update_rule() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(1.0)).unwrap();
        store.get_mut(w).grad[0] = 2.0;
        let mut opt = Optimizer::sgd(0.1);
        opt.step(&mut store);
        assert!((store.value(w).item() - 0.8).abs() < 1e-15);
        assert_eq!(opt.steps(), 1);
    }

    #[test]
    fn adam_first_step_moves_against_gradient() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::row(vec![1.0, 1.0])).unwrap();
        store.get_mut(w).grad.copy_from_slice(&[3.0, -0.5]);
        let mut opt = Optimizer::adam(0.01);
        opt.step(&mut store);
        let v = store.value(w).data();
        assert!(v[0] < 1.0 && v[1] > 1.0);
    }

    #[test]
    fn frozen_parameters_do_not_move() {
        let mut store = ParamStore::new();
        let w = store.add("w", Tensor::scalar(1.0)).unwrap();
        store.set_trainable(w, false);
        store.get_mut(w).grad[0] = 2.0;
        Optimizer::adam(0.1).step(&mut store);
        assert_eq!(store.value(w).item(), 1.0);
    }
}
