use serde::{Deserialize, Serialize};

use super::params::{Gradients, ParamSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// First/second moment accumulators for every parameter.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    step: u64,
}

impl AdamState {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, p)| vec![0.0; p.data.len()]).collect();
        Self {
            config,
            first: zeros.clone(),
            second: zeros,
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update. Parameters without a gradient buffer
    /// are treated as having a zero gradient. The update is refused before
    /// touching any parameter if a gradient entry is not finite.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients) -> Result<()> {
        for id in params.ids() {
            if let Some(g) = grads.get(id) {
                if g.iter().any(|x| !x.is_finite()) {
                    return Err(Error::NonFiniteGradient(params.get(id).name.clone()));
                }
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.config;
        let c1 = 1.0 - b1.powi(self.step as i32);
        let c2 = 1.0 - b2.powi(self.step as i32);
        for id in params.ids() {
            let g = grads.get(id);
            let (m, v) = (&mut self.first[id.index()], &mut self.second[id.index()]);
            let data = &mut params.get_mut(id).data;
            for k in 0..data.len() {
                let gk = g.map_or(0.0, |g| g[k]);
                m[k] = b1 * m[k] + (1.0 - b1) * gk;
                v[k] = b2 * v[k] + (1.0 - b2) * gk * gk;
                let mhat = m[k] / c1;
                let vhat = v[k] / c2;
                data[k] -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}
