//! AdamW over a [`ParamStore`].

use serde::{Deserialize, Serialize};

use crate::autodiff::{Gradients, ParamId};
use crate::policy::ParamStore;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        AdamWConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl AdamW {
    pub fn new(config: AdamWConfig, params: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.len()]).collect();
        AdamW {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    /// One update. Parameters with all-zero gradient and zero moments are
    /// left bit-identical.
    pub fn step(&mut self, params: &mut ParamStore, grads: &Gradients) {
        self.t += 1;
        let c = &self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let Some(g) = grads.param(ParamId(i)) else {
                continue;
            };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (x, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
                v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
                let mh = m[j] / bc1;
                let vh = v[j] / bc2;
                let update = mh / (vh.sqrt() + c.eps) + c.weight_decay * *x;
                if update != 0.0 {
                    *x -= c.lr * update;
                }
            }
        }
    }
}
