use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{Float, ParamId, ParamStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global L2 gradient-norm clip over the optimized parameters; 0 disables it.
    pub max_grad_norm: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { lr: 3e-4, beta1: 0.9, beta2: 0.999, eps: 1e-8, max_grad_norm: 1.0 }
    }
}

/// Adam over a fixed subset of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Adam<F> {
    pub cfg: AdamConfig,
    params: Vec<ParamId>,
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    t: u32,
}

impl<F: Float> Adam<F> {
    pub fn new(cfg: AdamConfig, params: Vec<ParamId>) -> Self {
        Self { cfg, params, m: Vec::new(), v: Vec::new(), t: 0 }
    }

    pub fn params(&self) -> &[ParamId] {
        &self.params
    }

    pub fn steps(&self) -> u32 {
        self.t
    }

    /// Gradient L2 norm over the optimized parameters.
    pub fn grad_norm(&self, store: &ParamStore<F>) -> f64 {
        let sq: f64 = self
            .params
            .iter()
            .flat_map(|id| store.get(*id).grad.iter())
            .map(|g| {
                let g = g.as_f64();
                g * g
            })
            .sum();
        libm::sqrt(sq)
    }

    /// Applies one update from the accumulated gradients, then zeroes them.
    /// Returns the pre-clip gradient norm.
    pub fn step(&mut self, store: &mut ParamStore<F>) -> f64 {
        if self.m.is_empty() {
            self.m = self.params.iter().map(|id| vec![F::zero(); store.get(*id).data.len()]).collect();
            self.v = self.m.clone();
        }
        let norm = self.grad_norm(store);
        let clip = if self.cfg.max_grad_norm > 0.0 && norm > self.cfg.max_grad_norm {
            self.cfg.max_grad_norm / (norm + 1e-6)
        } else {
            1.0
        };
        self.t += 1;
        let (b1, b2) = (self.cfg.beta1, self.cfg.beta2);
        let step = self.cfg.lr * libm::sqrt(1.0 - libm::pow(b2, f64::from(self.t))) / (1.0 - libm::pow(b1, f64::from(self.t)));
        let (b1f, b2f, clipf, stepf, epsf) = (F::lit(b1), F::lit(b2), F::lit(clip), F::lit(step), F::lit(self.cfg.eps));
        let one = F::one();
        for (k, id) in self.params.iter().enumerate() {
            let p = store.get_mut(*id);
            for i in 0..p.data.len() {
                let g = p.grad[i] * clipf;
                let m = b1f * self.m[k][i] + (one - b1f) * g;
                let v = b2f * self.v[k][i] + (one - b2f) * g * g;
                self.m[k][i] = m;
                self.v[k][i] = v;
                p.data[i] = p.data[i] - stepf * m / (v.sqrt() + epsf);
                p.grad[i] = F::zero();
            }
        }
        norm
    }
}
