use alloc::format;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::kernels;
use super::{Float, Graph, Mlp, MlpSpec, NetError, NodeId, ParamId, ParamStore, Tensor};

pub const LOG_STD_MIN: f64 = -4.0;
pub const LOG_STD_MAX: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicySpec {
    pub input: usize,
    pub hidden: Vec<usize>,
    pub actions: usize,
    pub log_std_init: f64,
    /// When set, the mean is `bound · tanh(mlp(x))`.
    pub mean_bound: Option<f64>,
}

/// Diagonal Gaussian with an MLP mean and a state-independent log-std.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub spec: PolicySpec,
    pub mlp: Mlp,
    pub log_std: ParamId,
}

impl GaussianPolicy {
    fn mlp_spec(spec: &PolicySpec) -> MlpSpec {
        MlpSpec { input: spec.input, hidden: spec.hidden.clone(), output: spec.actions }
    }

    pub fn init<F: Float, R: Rng + ?Sized>(prefix: &str, spec: PolicySpec, store: &mut ParamStore<F>, rng: &mut R) -> Self {
        // small output layer so the initial mean sits near the standing pose
        let mlp = Mlp::init(&format!("{prefix}.mean"), Self::mlp_spec(&spec), 0.01, store, rng);
        let log_std = store.add(
            format!("{prefix}.log_std"),
            1,
            spec.actions,
            (0..spec.actions).map(|_| F::lit(spec.log_std_init)).collect(),
        );
        Self { spec, mlp, log_std }
    }

    pub fn bind<F: Float>(prefix: &str, spec: PolicySpec, store: &ParamStore<F>) -> Result<Self, NetError> {
        let mlp = Mlp::bind(&format!("{prefix}.mean"), Self::mlp_spec(&spec), store)?;
        let log_std = store.require(&format!("{prefix}.log_std"))?;
        Ok(Self { spec, mlp, log_std })
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.mlp.param_ids().chain([self.log_std])
    }

    fn lo_hi<F: Float>() -> (F, F) {
        (F::lit(LOG_STD_MIN), F::lit(LOG_STD_MAX))
    }

    pub fn mean_node<F: Float>(&self, g: &mut Graph<F>, store: &ParamStore<F>, x: NodeId) -> Result<NodeId, NetError> {
        let out = self.mlp.forward(g, store, x)?;
        Ok(match self.spec.mean_bound {
            Some(bound) => {
                let t = g.tanh(out);
                g.scale(t, F::lit(bound))
            }
            None => out,
        })
    }

    pub fn log_std_node<F: Float>(&self, g: &mut Graph<F>, store: &ParamStore<F>) -> NodeId {
        let (lo, hi) = Self::lo_hi::<F>();
        let p = g.param(store, self.log_std);
        g.clip(p, lo, hi)
    }

    /// Returns `(log_prob rows×1, mean, clamped log_std)`.
    pub fn logp_node<F: Float>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        x: NodeId,
        actions: NodeId,
    ) -> Result<(NodeId, NodeId, NodeId), NetError> {
        let mean = self.mean_node(g, store, x)?;
        let ls = self.log_std_node(g, store);
        Ok((g.gaussian_logp(mean, ls, actions)?, mean, ls))
    }

    /// Entropy of the action distribution (state independent), 1×1.
    pub fn entropy_node<F: Float>(&self, g: &mut Graph<F>, log_std: NodeId) -> Result<NodeId, NetError> {
        let s = g.sum(log_std);
        let c = F::lit(self.spec.actions as f64 * (0.5 + 0.918_938_533_204_672_8));
        let cn = g.input(Tensor::filled(1, 1, c));
        g.add(s, cn)
    }

    pub fn clamped_log_std<F: Float>(&self, store: &ParamStore<F>) -> Vec<F> {
        let (lo, hi) = Self::lo_hi::<F>();
        store.get(self.log_std).data.iter().map(|x| x.max(lo).min(hi)).collect()
    }

    pub fn infer_mean<F: Float>(&self, store: &ParamStore<F>, x: &Tensor<F>) -> Result<Tensor<F>, NetError> {
        let out = self.mlp.infer(store, x)?;
        Ok(match self.spec.mean_bound {
            Some(bound) => {
                let b = F::lit(bound);
                out.map(F::tanh).map(|v| v * b)
            }
            None => out,
        })
    }

    pub fn logp<F: Float>(&self, store: &ParamStore<F>, x: &Tensor<F>, actions: &Tensor<F>) -> Result<Tensor<F>, NetError> {
        let mean = self.infer_mean(store, x)?;
        Ok(kernels::gaussian_logp(&mean, &self.clamped_log_std(store), actions))
    }

    /// `a = μ(x) + σ ε`; returns `(a, log_prob, mean)`.
    pub fn sample<F: Float, R: Rng + ?Sized>(
        &self,
        store: &ParamStore<F>,
        x: &Tensor<F>,
        rng: &mut R,
    ) -> Result<(Tensor<F>, Tensor<F>, Tensor<F>), NetError> {
        let mean = self.infer_mean(store, x)?;
        let ls = self.clamped_log_std(store);
        let mut a = mean.clone();
        for r in 0..a.rows {
            for (v, s) in a.row_mut(r).iter_mut().zip(&ls) {
                *v = *v + s.exp() * F::lit(crate::rng::normal(rng));
            }
        }
        let logp = kernels::gaussian_logp(&mean, &ls, &a);
        Ok((a, logp, mean))
    }
}
