//! Stochastic gradient descent with momentum and a step-decay schedule.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct SgdConfig {
    pub base_lr: f64,
    pub decay_factor: f64,
    /// Iteration indices at which the learning rate steps down. Must be
    /// strictly increasing.
    pub decay_iters: Vec<usize>,
    pub momentum: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            base_lr: 1e-3,
            decay_factor: 0.1,
            decay_iters: vec![1500, 2250],
            momentum: 0.9,
        }
    }
}

pub struct SgdState {
    pub config: SgdConfig,
    pub iteration: usize,
    velocity: BTreeMap<String, Vec<f64>>,
}

impl SgdState {
    pub fn new(config: SgdConfig) -> SgdState {
        SgdState {
            config,
            iteration: 0,
            velocity: BTreeMap::new(),
        }
    }

    /// Effective learning rate at iteration `t`:
    /// `base_lr * decay_factor^(count of decay iterations <= t)`.
    pub fn lr_at(&self, t: usize) -> f64 {
        let steps = self.config.decay_iters.iter().filter(|&&d| d <= t).count();
        self.config.base_lr * self.config.decay_factor.powi(steps as i32)
    }

    pub fn lr(&self) -> f64 {
        self.lr_at(self.iteration)
    }

    /// One update: `v = momentum*v + grad; p -= lr*v`. Gradients are
    /// cleared and the iteration counter advances.
    pub fn step(&mut self, params: &[(String, Tensor)]) -> Result<()> {
        let lr = self.lr();
        let momentum = self.config.momentum;
        for (name, p) in params {
            let grad = p.grad().ok_or_else(|| Error::MissingGradient {
                name: name.clone(),
            })?;
            let vel = self
                .velocity
                .entry(name.clone())
                .or_insert_with(|| vec![0.0; grad.len()]);
            p.map_data(|data| {
                for i in 0..data.len() {
                    vel[i] = momentum * vel[i] + grad[i];
                    data[i] -= lr * vel[i];
                }
            });
            p.clear_grad();
        }
        self.iteration += 1;
        Ok(())
    }

    pub fn velocity_entries(&self) -> impl Iterator<Item = (&String, &Vec<f64>)> {
        self.velocity.iter()
    }

    pub fn set_velocity(&mut self, name: String, v: Vec<f64>) {
        self.velocity.insert(name, v);
    }
}
