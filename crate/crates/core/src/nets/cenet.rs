//! Context estimator: a β-VAE whose encoder maps an observation history to a
//! body-velocity estimate and a latent context, and whose decoder predicts
//! the next observation from both.

use alloc::format;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Float, Graph, Mlp, MlpSpec, NetError, NodeId, ParamId, ParamStore, Tensor};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CeNetSpec {
    pub history_dim: usize,
    pub obs_dim: usize,
    pub vel_dim: usize,
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub beta: f64,
}

impl Default for CeNetSpec {
    fn default() -> Self {
        Self {
            history_dim: crate::obs::HISTORY_DIM,
            obs_dim: crate::obs::OBS_DIM,
            vel_dim: 2,
            latent_dim: 8,
            encoder_hidden: alloc::vec![64, 32],
            decoder_hidden: alloc::vec![32, 64],
            beta: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CeNet {
    pub spec: CeNetSpec,
    pub encoder: Mlp,
    pub decoder: Mlp,
}

/// Graph handles of one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CeNetNodes {
    pub vel: NodeId,
    pub mu: NodeId,
    pub log_sigma: NodeId,
    pub z: NodeId,
    pub recon: NodeId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CeNetLoss {
    pub total: NodeId,
    pub est: NodeId,
    pub recon: NodeId,
    pub kl: NodeId,
}

/// Encoder outputs of direct inference.
#[derive(Debug, Clone, PartialEq)]
pub struct CeNetOutput<F> {
    pub vel: Tensor<F>,
    pub mu: Tensor<F>,
    pub log_sigma: Tensor<F>,
    pub z: Tensor<F>,
}

/// How the latent is produced at inference time.
#[derive(Debug)]
pub enum LatentMode<'a, R: ?Sized> {
    /// `z = μ` (evaluation).
    Mean,
    /// `z = μ + σ ε` (training rollouts).
    Sample(&'a mut R),
}

impl CeNet {
    fn encoder_spec(s: &CeNetSpec) -> MlpSpec {
        MlpSpec { input: s.history_dim, hidden: s.encoder_hidden.clone(), output: s.vel_dim + 2 * s.latent_dim }
    }

    fn decoder_spec(s: &CeNetSpec) -> MlpSpec {
        MlpSpec { input: s.latent_dim + s.vel_dim, hidden: s.decoder_hidden.clone(), output: s.obs_dim }
    }

    pub fn init<F: Float, R: Rng + ?Sized>(prefix: &str, spec: CeNetSpec, store: &mut ParamStore<F>, rng: &mut R) -> Self {
        let encoder = Mlp::init(&format!("{prefix}.encoder"), Self::encoder_spec(&spec), 1.0, store, rng);
        let decoder = Mlp::init(&format!("{prefix}.decoder"), Self::decoder_spec(&spec), 1.0, store, rng);
        Self { spec, encoder, decoder }
    }

    pub fn bind<F: Float>(prefix: &str, spec: CeNetSpec, store: &ParamStore<F>) -> Result<Self, NetError> {
        let encoder = Mlp::bind(&format!("{prefix}.encoder"), Self::encoder_spec(&spec), store)?;
        let decoder = Mlp::bind(&format!("{prefix}.decoder"), Self::decoder_spec(&spec), store)?;
        Ok(Self { spec, encoder, decoder })
    }

    pub fn param_ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        self.encoder.param_ids().chain(self.decoder.param_ids())
    }

    /// With `eps = None` the latent is the mean.
    pub fn forward<F: Float>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        hist: NodeId,
        eps: Option<NodeId>,
    ) -> Result<CeNetNodes, NetError> {
        let (v, l) = (self.spec.vel_dim, self.spec.latent_dim);
        let enc = self.encoder.forward(g, store, hist)?;
        let vel = g.slice(enc, 0, v)?;
        let mu = g.slice(enc, v, l)?;
        let log_sigma = g.slice(enc, v + l, l)?;
        let z = match eps {
            Some(e) => {
                let sigma = g.exp(log_sigma);
                let noise = g.mul(sigma, e)?;
                g.add(mu, noise)?
            }
            None => mu,
        };
        let dec_in = g.concat(&[z, vel])?;
        let recon = self.decoder.forward(g, store, dec_in)?;
        Ok(CeNetNodes { vel, mu, log_sigma, z, recon })
    }

    /// `MSE(v̂, v) + MSE(ô, o_next) + β · mean KL`.
    pub fn loss<F: Float>(
        &self,
        g: &mut Graph<F>,
        store: &ParamStore<F>,
        hist: NodeId,
        o_next: NodeId,
        v_true: NodeId,
        eps: Option<NodeId>,
    ) -> Result<(CeNetNodes, CeNetLoss), NetError> {
        let n = self.forward(g, store, hist, eps)?;
        let est = mse(g, n.vel, v_true)?;
        let recon = mse(g, n.recon, o_next)?;
        let kl_rows = g.kl_std_normal(n.mu, n.log_sigma)?;
        let kl = g.mean(kl_rows);
        let beta_kl = g.scale(kl, F::lit(self.spec.beta));
        let vae = g.add(recon, beta_kl)?;
        let total = g.add(est, vae)?;
        Ok((n, CeNetLoss { total, est, recon, kl }))
    }

    pub fn infer<F: Float, R: Rng + ?Sized>(
        &self,
        store: &ParamStore<F>,
        hist: &Tensor<F>,
        mode: LatentMode<'_, R>,
    ) -> Result<CeNetOutput<F>, NetError> {
        let (v, l) = (self.spec.vel_dim, self.spec.latent_dim);
        let enc = self.encoder.infer(store, hist)?;
        let cols = |start: usize, len: usize| {
            let mut t = Tensor::zeros(enc.rows, len);
            for r in 0..enc.rows {
                t.row_mut(r).copy_from_slice(&enc.row(r)[start..start + len]);
            }
            t
        };
        let (vel, mu, log_sigma) = (cols(0, v), cols(v, l), cols(v + l, l));
        let z = match mode {
            LatentMode::Mean => mu.clone(),
            LatentMode::Sample(rng) => {
                let mut z = mu.clone();
                for (zi, s) in z.data.iter_mut().zip(&log_sigma.data) {
                    *zi = *zi + s.exp() * F::lit(crate::rng::normal(rng));
                }
                z
            }
        };
        Ok(CeNetOutput { vel, mu, log_sigma, z })
    }

    /// Decoder prediction from explicit `(z, v̂)`.
    pub fn decode<F: Float>(&self, store: &ParamStore<F>, z: &Tensor<F>, vel: &Tensor<F>) -> Result<Tensor<F>, NetError> {
        let mut x = Tensor::zeros(z.rows, z.cols + vel.cols);
        for r in 0..z.rows {
            x.row_mut(r)[..z.cols].copy_from_slice(z.row(r));
            x.row_mut(r)[z.cols..].copy_from_slice(vel.row(r));
        }
        self.decoder.infer(store, &x)
    }
}

fn mse<F: Float>(g: &mut Graph<F>, a: NodeId, b: NodeId) -> Result<NodeId, NetError> {
    let d = g.sub(a, b)?;
    let sq = g.square(d);
    Ok(g.mean(sq))
}
