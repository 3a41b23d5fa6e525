//! Adam with bias correction and a linearly decaying learning rate.

use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tape::Gradients;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub base_lr: f64,
    pub final_lr: f64,
    pub total_steps: u64,
}

impl AdamConfig {
    pub fn constant(lr: f64) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            base_lr: lr,
            final_lr: lr,
            total_steps: 0,
        }
    }

    pub fn linear(base_lr: f64, final_lr: f64, total_steps: u64) -> Self {
        Self {
            base_lr,
            final_lr,
            total_steps,
            ..Self::constant(base_lr)
        }
    }

    /// Learning rate used for the update after `step` completed updates.
    pub fn lr_at(&self, step: u64) -> f64 {
        if self.total_steps == 0 || step >= self.total_steps {
            return self.final_lr;
        }
        self.base_lr + (self.final_lr - self.base_lr) * (step as f64 / self.total_steps as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub config: AdamConfig,
    pub first: Vec<Vec<f64>>,
    pub second: Vec<Vec<f64>>,
    pub step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, group_sizes: impl IntoIterator<Item = usize>) -> Self {
        let sizes: Vec<usize> = group_sizes.into_iter().collect();
        Self {
            config,
            first: sizes.iter().map(|n| vec![0.0; *n]).collect(),
            second: sizes.iter().map(|n| vec![0.0; *n]).collect(),
            step: 0,
        }
    }

    pub fn for_store(config: AdamConfig, store: &ParamStore) -> Self {
        Self::new(config, store.ids().map(|id| store.get(id).len()))
    }

    pub fn current_lr(&self) -> f64 {
        self.config.lr_at(self.step)
    }

    fn update_group(&mut self, group: usize, param: &mut [f64], grad: &[f64], lr: f64, t: f64) {
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let c1 = 1.0 - beta1.powf(t);
        let c2 = 1.0 - beta2.powf(t);
        let (m, v) = (&mut self.first[group], &mut self.second[group]);
        for k in 0..param.len() {
            let g = grad[k];
            m[k] = beta1 * m[k] + (1.0 - beta1) * g;
            v[k] = beta2 * v[k] + (1.0 - beta2) * g * g;
            let mhat = m[k] / c1;
            let vhat = v[k] / c2;
            param[k] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }

    /// One update of every parameter in `store`.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        if !grads.all_finite() {
            return Err(Error::NumericFault {
                context: "adam gradient".into(),
                layer: None,
            });
        }
        let lr = self.current_lr();
        let t = (self.step + 1) as f64;
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            if let Some(g) = grads.param_ref(id) {
                let g = g.data().to_vec();
                let p = store.get_mut(id);
                self.update_group(id.index(), p.data_mut(), &g, lr, t);
            } else {
                let n = store.get(id).len();
                let p = store.get_mut(id);
                self.update_group(id.index(), p.data_mut(), &vec![0.0; n], lr, t);
            }
        }
        self.step += 1;
        Ok(())
    }

    /// One update of a single flat parameter vector (group 0).
    pub fn step_flat(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if grads.iter().any(|g| !g.is_finite()) {
            return Err(Error::NumericFault {
                context: "adam gradient".into(),
                layer: None,
            });
        }
        let lr = self.current_lr();
        let t = (self.step + 1) as f64;
        self.update_group(0, params, grads, lr, t);
        self.step += 1;
        Ok(())
    }
}
