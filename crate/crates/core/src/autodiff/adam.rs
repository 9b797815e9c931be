use serde::{Deserialize, Serialize};

use super::graph::{Gradients, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || store.values().iter().map(|v| Tensor::zeros(v.shape())).collect();
        Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn moments(&self) -> (&[Tensor], &[Tensor]) {
        (&self.first, &self.second)
    }

    /// Restore accumulators saved by [`moments`](Self::moments).
    pub fn from_parts(config: AdamConfig, first: Vec<Tensor>, second: Vec<Tensor>, step: u64) -> Self {
        Self {
            config,
            first,
            second,
            step,
        }
    }

    /// One update of every parameter. Non-finite gradients leave the parameters
    /// untouched and report the step that would have been taken.
    pub fn step(&mut self, store: &mut ParamStore, grads: &Gradients) -> Result<()> {
        let next = self.step + 1;
        if grads.as_slice().len() != store.len() || self.first.len() != store.len() {
            return Err(Error::Shape(format!(
                "adam: {} parameters, {} gradients, {} accumulators",
                store.len(),
                grads.as_slice().len(),
                self.first.len()
            )));
        }
        for (i, g) in grads.as_slice().iter().enumerate() {
            if g.len() != store.values()[i].len() {
                return Err(Error::Shape(format!(
                    "adam: gradient for `{}` has {} values, parameter has {}",
                    store.name(super::graph::ParamId(i)),
                    g.len(),
                    store.values()[i].len()
                )));
            }
            if !g.all_finite() {
                return Err(Error::Training {
                    step: next as usize,
                    msg: format!(
                        "non-finite gradient for `{}`",
                        store.name(super::graph::ParamId(i))
                    ),
                });
            }
        }
        self.step = next;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(next as i32);
        let c2 = 1.0 - beta2.powi(next as i32);
        for (i, p) in store.values_mut().iter_mut().enumerate() {
            let g = grads.as_slice()[i].data();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            for (j, x) in p.data_mut().iter_mut().enumerate() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let mhat = m[j] / c1;
                let vhat = v[j] / c2;
                *x -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
