use serde::{Deserialize, Serialize};

use crate::autograd::Matrix;
use crate::params::ParamStore;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Decoupled: applied to the weights directly, not through the moments.
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
        }
    }
}

/// Adam with decoupled weight decay over every tensor of one store.
#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        Self {
            config,
            m: store.zeros_like(),
            v: store.zeros_like(),
            t: 0,
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, store: &mut ParamStore, grads: &[Matrix]) {
        assert!(store.is_trainable(), "optimizer applied to a frozen store");
        assert_eq!(grads.len(), store.len());
        self.t += 1;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(self.t as i32);
        let bc2 = 1.0 - c.beta2.powi(self.t as i32);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let i = id.index();
            let g = &grads[i];
            let m = &mut self.m[i];
            let v = &mut self.v[i];
            let w = store.get_mut(id);
            ndarray::Zip::from(w)
                .and(m)
                .and(v)
                .and(g)
                .for_each(|w, m, v, &g| {
                    *m = c.beta1 * *m + (1.0 - c.beta1) * g;
                    *v = c.beta2 * *v + (1.0 - c.beta2) * g * g;
                    let mhat = *m / bc1;
                    let vhat = *v / bc2;
                    *w -= c.learning_rate * (mhat / (vhat.sqrt() + c.eps) + c.weight_decay * *w);
                });
        }
    }
}
