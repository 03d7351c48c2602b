use alloc::vec::Vec;

use crate::nets::Tensor;
use crate::obs::{HISTORY_DIM, OBS_DIM};
use crate::sim::NUM_JOINTS;

use super::bundle::CRITIC_DIM;

/// One policy's share of a rollout.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PolicyRollout {
    pub inputs: Vec<f32>,
    pub actions: Vec<f32>,
    pub logp: Vec<f32>,
    pub values: Vec<f64>,
    pub rewards: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

/// Step-major rollout storage (`row = t · n_envs + i`).
#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBuffer {
    pub n_envs: usize,
    pub nominal_dim: usize,
    pub adaptive_dim: usize,
    pub history: Vec<f32>,
    pub critic: Vec<f32>,
    pub next_obs: Vec<f32>,
    pub v_true: Vec<f32>,
    pub dones: Vec<bool>,
    pub nominal: PolicyRollout,
    pub adaptive: Option<PolicyRollout>,
}

impl RolloutBuffer {
    pub fn new(n_envs: usize, nominal_dim: usize, adaptive_dim: Option<usize>) -> Self {
        Self {
            n_envs,
            nominal_dim,
            adaptive_dim: adaptive_dim.unwrap_or(0),
            history: Vec::new(),
            critic: Vec::new(),
            next_obs: Vec::new(),
            v_true: Vec::new(),
            dones: Vec::new(),
            nominal: PolicyRollout::default(),
            adaptive: adaptive_dim.map(|_| PolicyRollout::default()),
        }
    }

    pub fn len(&self) -> usize {
        self.dones.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dones.is_empty()
    }

    pub fn horizon(&self) -> usize {
        self.len() / self.n_envs
    }

    /// Rows `idx` of a flat `cols`-wide field as a tensor.
    pub fn gather<F: crate::nets::Float>(field: &[f32], cols: usize, idx: &[usize]) -> Tensor<F> {
        let mut t = Tensor::zeros(idx.len(), cols);
        for (r, &k) in idx.iter().enumerate() {
            for (dst, src) in t.row_mut(r).iter_mut().zip(&field[k * cols..(k + 1) * cols]) {
                *dst = F::lit(f64::from(*src));
            }
        }
        t
    }

    pub fn gather_scalars<F: crate::nets::Float>(field: &[f64], idx: &[usize]) -> Tensor<F> {
        Tensor { rows: idx.len(), cols: 1, data: idx.iter().map(|&k| F::lit(field[k])).collect() }
    }

    /// Checks that every field holds one entry per row.
    pub fn is_consistent(&self) -> bool {
        let n = self.len();
        let policy_ok = |p: &PolicyRollout, dim: usize| {
            p.inputs.len() == n * dim
                && p.actions.len() == n * NUM_JOINTS
                && p.logp.len() == n
                && p.values.len() == n
                && p.rewards.len() == n
        };
        self.history.len() == n * HISTORY_DIM
            && self.critic.len() == n * CRITIC_DIM
            && self.next_obs.len() == n * OBS_DIM
            && self.v_true.len() == n * 2
            && n % self.n_envs == 0
            && policy_ok(&self.nominal, self.nominal_dim)
            && self.adaptive.as_ref().is_none_or(|p| policy_ok(p, self.adaptive_dim))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gather_picks_rows_in_order() {
        let field: Vec<f32> = (0..12).map(|v| v as f32).collect();
        let t: Tensor<f64> = RolloutBuffer::gather(&field, 3, &[3, 0]);
        assert_eq!(t.data, alloc::vec![9.0, 10.0, 11.0, 0.0, 1.0, 2.0]);
    }

    #[test]
    fn empty_buffer_is_consistent() {
        let b = RolloutBuffer::new(4, 27, Some(31));
        assert!(b.is_consistent() && b.is_empty());
    }
}
