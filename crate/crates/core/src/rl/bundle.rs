//! All trainable networks of one controller in a single parameter store.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::nets::{CeNet, CeNetSpec, GaussianPolicy, LatentMode, Mlp, MlpSpec, NetError, ParamId, ParamStore, PolicySpec, Tensor};
use crate::obs::{AUG_DIM, OBS_DIM};
use crate::rng::SimRng;
use crate::sim::NUM_JOINTS;

use super::env::EnvObservation;

/// Noise-free features, true (vx, vz), scaled payload mass, true foot forces.
pub const CRITIC_DIM: usize = OBS_DIM + 2 + 1 + 4;
/// Nominal policy input with the default context estimator.
pub const NOMINAL_INPUT_DIM: usize = OBS_DIM + 8 + 2;

const NOMINAL: &str = "nominal";
const NOMINAL_CRITIC: &str = "nominal_critic";
const ADAPTIVE: &str = "adaptive";
const ADAPTIVE_CRITIC: &str = "adaptive_critic";
const CENET: &str = "cenet";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    /// Nominal policy and context estimator, no payload.
    One,
    /// Both policies under randomized payloads.
    Two,
    /// Nominal policy alone under base-mass randomization.
    Baseline,
}

impl Phase {
    pub fn has_adaptive(self) -> bool {
        self != Phase::Baseline
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BundleSpec {
    pub policy_hidden: Vec<usize>,
    pub critic_hidden: Vec<usize>,
    pub log_std_init: f64,
    /// Nominal actions are clipped to ±this when applied, rad.
    pub action_limit: f64,
    /// Corrective actions are bounded by this fraction of `action_limit`.
    pub adaptive_bound_scale: f64,
    pub cenet: CeNetSpec,
}

impl Default for BundleSpec {
    fn default() -> Self {
        Self {
            policy_hidden: alloc::vec![256, 128, 64],
            critic_hidden: alloc::vec![256, 128, 64],
            log_std_init: -1.0,
            action_limit: 1.0,
            adaptive_bound_scale: 0.5,
            cenet: CeNetSpec::default(),
        }
    }
}

impl BundleSpec {
    fn context_dim(&self) -> usize {
        self.cenet.latent_dim + self.cenet.vel_dim
    }

    pub fn nominal_input(&self) -> usize {
        OBS_DIM + self.context_dim()
    }

    pub fn adaptive_input(&self) -> usize {
        AUG_DIM + self.context_dim()
    }

    pub fn adaptive_bound(&self) -> f64 {
        self.adaptive_bound_scale * self.action_limit
    }

    fn nominal_spec(&self) -> PolicySpec {
        PolicySpec {
            input: self.nominal_input(),
            hidden: self.policy_hidden.clone(),
            actions: NUM_JOINTS,
            log_std_init: self.log_std_init,
            mean_bound: None,
        }
    }

    fn adaptive_spec(&self) -> PolicySpec {
        PolicySpec {
            input: self.adaptive_input(),
            hidden: self.policy_hidden.clone(),
            actions: NUM_JOINTS,
            log_std_init: self.log_std_init,
            mean_bound: Some(self.adaptive_bound()),
        }
    }

    fn critic_spec(&self) -> MlpSpec {
        MlpSpec { input: CRITIC_DIM, hidden: self.critic_hidden.clone(), output: 1 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyBundle {
    pub spec: BundleSpec,
    pub phase: Phase,
    pub store: ParamStore<f32>,
    pub nominal: GaussianPolicy,
    pub nominal_critic: Mlp,
    pub adaptive: Option<GaussianPolicy>,
    pub adaptive_critic: Option<Mlp>,
    pub cenet: CeNet,
}

#[derive(Debug)]
pub enum ActMode<'a> {
    /// Policy means and `z = μ`.
    Deterministic,
    Sample(&'a mut SimRng),
}

/// One batched decision: network inputs and raw outputs, row per environment.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchAction {
    pub hist: Tensor<f32>,
    pub nominal_in: Tensor<f32>,
    pub adaptive_in: Option<Tensor<f32>>,
    pub a: Tensor<f32>,
    pub a_logp: Tensor<f32>,
    pub delta: Option<Tensor<f32>>,
    pub delta_logp: Option<Tensor<f32>>,
    pub vel: Tensor<f32>,
    pub z: Tensor<f32>,
}

impl BatchAction {
    /// `(a, Δa)` for row `i` as sent to the robot: `a` clipped to the action
    /// limit, `Δa` to the corrective bound, `Δa = 0` without an adaptive policy.
    pub fn applied(&self, i: usize, spec: &BundleSpec) -> ([f64; NUM_JOINTS], [f64; NUM_JOINTS]) {
        let lim = spec.action_limit;
        let a = core::array::from_fn(|j| f64::from(self.a.row(i)[j]).clamp(-lim, lim));
        let delta = match &self.delta {
            Some(d) => {
                let b = spec.adaptive_bound();
                core::array::from_fn(|j| f64::from(d.row(i)[j]).clamp(-b, b))
            }
            None => [0.0; NUM_JOINTS],
        };
        (a, delta)
    }
}

fn stack<const N: usize>(rows: &[&EnvObservation], pick: impl Fn(&EnvObservation) -> &[f32; N]) -> Tensor<f32> {
    let mut t = Tensor::zeros(rows.len(), N);
    for (i, o) in rows.iter().enumerate() {
        t.row_mut(i).copy_from_slice(pick(o));
    }
    t
}

/// `[x, z, v̂]` row by row.
fn with_context(x: &Tensor<f32>, z: &Tensor<f32>, vel: &Tensor<f32>) -> Tensor<f32> {
    let cols = x.cols + z.cols + vel.cols;
    let mut t = Tensor::zeros(x.rows, cols);
    for r in 0..x.rows {
        let row = t.row_mut(r);
        row[..x.cols].copy_from_slice(x.row(r));
        row[x.cols..x.cols + z.cols].copy_from_slice(z.row(r));
        row[x.cols + z.cols..].copy_from_slice(vel.row(r));
    }
    t
}

impl PolicyBundle {
    pub fn new(spec: BundleSpec, phase: Phase, rng: &mut SimRng) -> Self {
        let mut store = ParamStore::new();
        let cenet = CeNet::init(CENET, spec.cenet.clone(), &mut store, rng);
        let nominal = GaussianPolicy::init(NOMINAL, spec.nominal_spec(), &mut store, rng);
        let nominal_critic = Mlp::init(NOMINAL_CRITIC, spec.critic_spec(), 1.0, &mut store, rng);
        let (adaptive, adaptive_critic) = if phase.has_adaptive() {
            (
                Some(GaussianPolicy::init(ADAPTIVE, spec.adaptive_spec(), &mut store, rng)),
                Some(Mlp::init(ADAPTIVE_CRITIC, spec.critic_spec(), 1.0, &mut store, rng)),
            )
        } else {
            (None, None)
        };
        Self { spec, phase, store, nominal, nominal_critic, adaptive, adaptive_critic, cenet }
    }

    /// Re-binds networks to an existing store, e.g. one loaded from disk.
    pub fn bind(spec: BundleSpec, phase: Phase, store: ParamStore<f32>) -> Result<Self, NetError> {
        let cenet = CeNet::bind(CENET, spec.cenet.clone(), &store)?;
        let nominal = GaussianPolicy::bind(NOMINAL, spec.nominal_spec(), &store)?;
        let nominal_critic = Mlp::bind(NOMINAL_CRITIC, spec.critic_spec(), &store)?;
        let (adaptive, adaptive_critic) = if phase.has_adaptive() {
            (
                Some(GaussianPolicy::bind(ADAPTIVE, spec.adaptive_spec(), &store)?),
                Some(Mlp::bind(ADAPTIVE_CRITIC, spec.critic_spec(), &store)?),
            )
        } else {
            (None, None)
        };
        Ok(Self { spec, phase, store, nominal, nominal_critic, adaptive, adaptive_critic, cenet })
    }

    pub fn nominal_ids(&self) -> Vec<ParamId> {
        self.nominal.param_ids().chain(self.nominal_critic.param_ids()).collect()
    }

    pub fn adaptive_ids(&self) -> Vec<ParamId> {
        match (&self.adaptive, &self.adaptive_critic) {
            (Some(p), Some(c)) => p.param_ids().chain(c.param_ids()).collect(),
            _ => Vec::new(),
        }
    }

    pub fn cenet_ids(&self) -> Vec<ParamId> {
        self.cenet.param_ids().collect()
    }

    /// Whether actions include the corrective policy in this phase.
    pub fn adaptive_active(&self) -> bool {
        self.phase == Phase::Two && self.adaptive.is_some()
    }

    /// Runs the context estimator and the policies on a batch of observations.
    /// `use_adaptive = false` leaves `Δa` out even when the network exists.
    pub fn act(&self, obs: &[&EnvObservation], mode: ActMode<'_>, use_adaptive: bool) -> Result<BatchAction, NetError> {
        let hist = stack(obs, |o| &o.history);
        let features = stack(obs, |o| &o.features);
        let (ctx, rng) = match mode {
            ActMode::Deterministic => (self.cenet.infer::<f32, SimRng>(&self.store, &hist, LatentMode::Mean)?, None),
            ActMode::Sample(rng) => (self.cenet.infer(&self.store, &hist, LatentMode::Sample(&mut *rng))?, Some(rng)),
        };
        let nominal_in = with_context(&features, &ctx.z, &ctx.vel);
        let adaptive_net = if use_adaptive { self.adaptive.as_ref() } else { None };
        let adaptive_in = adaptive_net.map(|_| with_context(&stack(obs, |o| &o.aug_features), &ctx.z, &ctx.vel));

        let mut rng = rng;
        let mut draw = |policy: &GaussianPolicy, x: &Tensor<f32>| -> Result<(Tensor<f32>, Tensor<f32>), NetError> {
            match rng.as_deref_mut() {
                Some(r) => {
                    let (a, logp, _) = policy.sample(&self.store, x, r)?;
                    Ok((a, logp))
                }
                None => {
                    let mean = policy.infer_mean(&self.store, x)?;
                    let logp = policy.logp(&self.store, x, &mean)?;
                    Ok((mean, logp))
                }
            }
        };
        let (a, a_logp) = draw(&self.nominal, &nominal_in)?;
        let (delta, delta_logp) = match (adaptive_net, &adaptive_in) {
            (Some(p), Some(x)) => {
                let (d, l) = draw(p, x)?;
                (Some(d), Some(l))
            }
            _ => (None, None),
        };
        Ok(BatchAction { hist, nominal_in, adaptive_in, a, a_logp, delta, delta_logp, vel: ctx.vel, z: ctx.z })
    }

    /// Critic values `(nominal, adaptive)`, one per row of `critic_in`.
    pub fn values(&self, critic_in: &Tensor<f32>) -> Result<(Tensor<f32>, Option<Tensor<f32>>), NetError> {
        let vn = self.nominal_critic.infer(&self.store, critic_in)?;
        let va = match &self.adaptive_critic {
            Some(c) => Some(c.infer(&self.store, critic_in)?),
            None => None,
        };
        Ok((vn, va))
    }

    pub fn critic_inputs(obs: &[&EnvObservation]) -> Tensor<f32> {
        stack(obs, |o| &o.critic)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::env::{CommandDriver, Env, EnvOptions, EnvSettings, PayloadDriver};
    use crate::obs::CommandScript;
    use crate::rng::{seeded, stream};
    use crate::sim::TerrainProfile;

    fn small_spec() -> BundleSpec {
        BundleSpec { policy_hidden: alloc::vec![16], critic_hidden: alloc::vec![16], ..Default::default() }
    }

    fn observation() -> EnvObservation {
        let opts = EnvOptions::evaluation(
            PayloadDriver::Off,
            CommandDriver::Scripted(CommandScript::constant(0.3, 0.28)),
            TerrainProfile::flat(),
        );
        let mut env = Env::new(EnvSettings::default(), opts, stream(1, 1)).unwrap();
        env.observe()
    }

    #[test]
    fn baseline_has_no_adaptive_parameters() {
        let b = PolicyBundle::new(small_spec(), Phase::Baseline, &mut seeded(1));
        assert!(b.adaptive.is_none());
        assert!(b.store.ids_with_prefix("adaptive").is_empty());
        let p1 = PolicyBundle::new(small_spec(), Phase::One, &mut seeded(1));
        assert!(!p1.adaptive_ids().is_empty());
    }

    #[test]
    fn bind_round_trips_the_store() {
        let b = PolicyBundle::new(small_spec(), Phase::Two, &mut seeded(2));
        let again = PolicyBundle::bind(small_spec(), Phase::Two, b.store.clone()).unwrap();
        assert_eq!(b, again);
        assert!(PolicyBundle::bind(BundleSpec::default(), Phase::Two, b.store.clone()).is_err());
    }

    #[test]
    fn deterministic_act_is_repeatable_and_batch_independent() {
        let b = PolicyBundle::new(small_spec(), Phase::Two, &mut seeded(3));
        let o = observation();
        let one = b.act(&[&o], ActMode::Deterministic, true).unwrap();
        let three = b.act(&[&o, &o, &o], ActMode::Deterministic, true).unwrap();
        assert_eq!(one.a.row(0), three.a.row(2));
        assert_eq!(one.delta.as_ref().unwrap().row(0), three.delta.as_ref().unwrap().row(1));
        assert_eq!(one.nominal_in.cols, small_spec().nominal_input());
        assert_eq!(one.adaptive_in.as_ref().unwrap().cols, small_spec().adaptive_input());
    }

    #[test]
    fn applied_actions_respect_bounds() {
        let spec = small_spec();
        let act = BatchAction {
            hist: Tensor::zeros(1, 1),
            nominal_in: Tensor::zeros(1, 1),
            adaptive_in: None,
            a: Tensor::from_vec(1, 4, alloc::vec![2.0, -3.0, 0.5, 0.0]).unwrap(),
            a_logp: Tensor::zeros(1, 1),
            delta: Some(Tensor::from_vec(1, 4, alloc::vec![0.9, -0.1, -0.7, 0.2]).unwrap()),
            delta_logp: None,
            vel: Tensor::zeros(1, 2),
            z: Tensor::zeros(1, 8),
        };
        let (a, d) = act.applied(0, &spec);
        assert_eq!(a, [1.0, -1.0, 0.5, 0.0]);
        assert_eq!(d, [0.5, -0.1f32 as f64, -0.5, 0.2f32 as f64]);
    }

    #[test]
    fn adaptive_mean_stays_inside_bound() {
        let mut b = PolicyBundle::new(small_spec(), Phase::Two, &mut seeded(4));
        // blow up the output layer so tanh saturates
        let last = b.adaptive.as_ref().unwrap().mlp.layers.last().unwrap().1;
        b.store.get_mut(last).data.iter_mut().for_each(|v| *v = 50.0);
        let o = observation();
        let out = b.act(&[&o], ActMode::Deterministic, true).unwrap();
        let bound = small_spec().adaptive_bound() as f32;
        assert!(out.delta.unwrap().data.iter().all(|d| d.abs() <= bound));
    }
}
