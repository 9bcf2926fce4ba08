use serde::{Deserialize, Serialize};

use crate::{NeuralError, ParamStore, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8, clip_norm: Some(5.0) }
    }
}

/// Adaptive-moment optimizer state, one moment pair per parameter tensor.
#[derive(Debug, Clone)]
pub struct Adam {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl Adam {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let first = store.iter().map(|p| vec![0.0; p.tensor.len()]).collect::<Vec<_>>();
        Self { config, second: first.clone(), first, steps: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn first_moment(&self, i: usize) -> &[f64] {
        &self.first[i]
    }

    pub fn second_moment(&self, i: usize) -> &[f64] {
        &self.second[i]
    }

    /// Applies one update from the gradients accumulated in `store`, then
    /// clears them. Parameters without a gradient see a zero gradient.
    pub fn step(&mut self, store: &mut ParamStore, lr: f64) -> Result<()> {
        if store.len() != self.first.len() {
            return Err(NeuralError::Shape(format!(
                "optimizer tracks {} tensors, store has {}",
                self.first.len(),
                store.len()
            )));
        }
        for (i, id) in store.ids().enumerate() {
            let n = store.get(id).len();
            if n != self.first[i].len() {
                return Err(NeuralError::Shape(format!(
                    "optimizer state for {} has {} elements, tensor has {n}",
                    store.name(id),
                    self.first[i].len()
                )));
            }
        }
        let clip = match self.config.clip_norm {
            Some(max) => {
                let sq: f64 = store
                    .iter()
                    .filter_map(|p| p.tensor.grad())
                    .flat_map(|g| g.iter())
                    .map(|g| g * g)
                    .sum();
                let norm = sq.sqrt();
                if norm > max {
                    max / norm
                } else {
                    1.0
                }
            }
            None => 1.0,
        };

        self.steps += 1;
        let AdamConfig { beta1, beta2, eps, .. } = self.config;
        let t = self.steps as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let ids: Vec<_> = store.ids().collect();
        for (i, id) in ids.into_iter().enumerate() {
            let tensor = store.get_mut(id);
            let grad = tensor.grad().map(|g| g.to_vec());
            let (m, v) = (&mut self.first[i], &mut self.second[i]);
            let data = tensor.data_mut();
            for j in 0..data.len() {
                let g = grad.as_ref().map_or(0.0, |g| g[j] * clip);
                m[j] = beta1 * m[j] + (1.0 - beta1) * g;
                v[j] = beta2 * v[j] + (1.0 - beta2) * g * g;
                if m[j] == 0.0 {
                    continue;
                }
                let mhat = m[j] / bc1;
                let vhat = v[j] / bc2;
                data[j] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        store.zero_grad();
        Ok(())
    }
}
