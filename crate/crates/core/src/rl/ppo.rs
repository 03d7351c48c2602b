use serde::{Deserialize, Serialize};

use crate::nets::{Float, GaussianPolicy, Graph, Mlp, NetError, NodeId, ParamStore, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub clip: f64,
    pub epochs: usize,
    pub minibatches: usize,
    pub gamma: f64,
    pub lambda: f64,
    pub entropy_coef: f64,
    pub value_coef: f64,
    /// A policy stops updating for the rest of the iteration once its
    /// minibatch approximate KL exceeds this.
    pub kl_limit: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            clip: 0.2,
            epochs: 4,
            minibatches: 4,
            gamma: 0.99,
            lambda: 0.95,
            entropy_coef: 0.005,
            value_coef: 1.0,
            kl_limit: 0.15,
        }
    }
}

/// `min(ρ Â, clip(ρ, 1 − ε, 1 + ε) Â)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, eps: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - eps, 1.0 + eps) * advantage)
}

/// One minibatch for one policy.
#[derive(Debug, Clone, PartialEq)]
pub struct PpoBatch<F> {
    pub inputs: Tensor<F>,
    pub actions: Tensor<F>,
    pub logp_old: Tensor<F>,
    pub advantages: Tensor<F>,
    pub returns: Tensor<F>,
    pub critic_in: Tensor<F>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PpoLoss {
    pub total: NodeId,
    pub surrogate: NodeId,
    pub value: NodeId,
    pub entropy: NodeId,
    pub ratio: NodeId,
}

/// `−mean(clipped surrogate) + c_v · MSE(V, R) − c_e · H`.
pub fn ppo_loss<F: Float>(
    g: &mut Graph<F>,
    store: &ParamStore<F>,
    policy: &GaussianPolicy,
    critic: &Mlp,
    batch: &PpoBatch<F>,
    cfg: &PpoConfig,
) -> Result<PpoLoss, NetError> {
    let x = g.input(batch.inputs.clone());
    let act = g.input(batch.actions.clone());
    let (logp, _, log_std) = policy.logp_node(g, store, x, act)?;
    let old = g.input(batch.logp_old.clone());
    let diff = g.sub(logp, old)?;
    let ratio = g.exp(diff);
    let adv = g.input(batch.advantages.clone());
    let unclipped = g.mul(ratio, adv)?;
    let eps = F::lit(cfg.clip);
    let clipped_ratio = g.clip(ratio, F::one() - eps, F::one() + eps);
    let clipped = g.mul(clipped_ratio, adv)?;
    let term = g.min(unclipped, clipped)?;
    let surrogate = g.mean(term);

    let c = g.input(batch.critic_in.clone());
    let v = critic.forward(g, store, c)?;
    let ret = g.input(batch.returns.clone());
    let err = g.sub(v, ret)?;
    let sq = g.square(err);
    let value = g.mean(sq);

    let entropy = policy.entropy_node(g, log_std)?;

    let neg_surr = g.scale(surrogate, -F::one());
    let weighted_value = g.scale(value, F::lit(cfg.value_coef));
    let weighted_entropy = g.scale(entropy, F::lit(-cfg.entropy_coef));
    let partial = g.add(neg_surr, weighted_value)?;
    let total = g.add(partial, weighted_entropy)?;
    Ok(PpoLoss { total, surrogate, value, entropy, ratio })
}

/// Per-iteration summary for one policy.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PpoStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    /// Largest `|ρ − 1|` on the first minibatch of the first epoch.
    pub initial_ratio_dev: f64,
    pub updates: u32,
    pub early_stopped: bool,
}

/// `(mean((ρ − 1) − ln ρ), fraction with |ρ − 1| > ε, max |ρ − 1|)`.
pub fn ratio_stats<F: Float>(ratio: &Tensor<F>, eps: f64) -> (f64, f64, f64) {
    let n = ratio.data.len().max(1) as f64;
    let mut kl = 0.0;
    let mut clipped = 0.0;
    let mut max_dev = 0.0f64;
    for r in &ratio.data {
        let r = r.as_f64();
        kl += (r - 1.0) - libm::log(r);
        let dev = (r - 1.0).abs();
        if dev > eps {
            clipped += 1.0;
        }
        max_dev = max_dev.max(dev);
    }
    (kl / n, clipped / n, max_dev)
}
