use alloc::vec::Vec;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::nets::{Adam, AdamConfig, Graph, Tensor};
use crate::obs::{HISTORY_DIM, OBS_DIM};
use crate::rewards::NUM_TERMS;
use crate::rng::{normal, stream, RngState, SimRng};
use crate::sim::{SimError, Termination, NUM_JOINTS};

use super::buffer::{PolicyRollout, RolloutBuffer};
use super::bundle::{ActMode, BundleSpec, Phase, PolicyBundle, CRITIC_DIM};
use super::env::{Env, EnvObservation, EnvOptions, EnvSettings, PayloadDriver, StepResult};
use super::executor::Executor;
use super::gae::{compute_gae, normalize};
use super::ppo::{ppo_loss, ratio_stats, PpoBatch, PpoConfig, PpoStats};
use super::RlError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub num_envs: usize,
    pub horizon: usize,
    pub phase1_iterations: u32,
    pub phase2_iterations: u32,
    pub baseline_iterations: u32,
    pub ppo: PpoConfig,
    pub adam: AdamConfig,
    /// Context-estimator learning-rate multiplier while the adaptive policy trains.
    pub cenet_lr_scale_phase2: f64,
    /// Multiplier applied to per-step rewards before advantage estimation.
    pub reward_scale: f64,
    /// Clip each per-step reward total at zero before scaling, so that an
    /// early fall never pays better than staying up.
    pub positive_rewards_only: bool,
    pub seed: u64,
    /// Per-episode base-mass offset range of the baseline controller, in
    /// reference-robot kilograms (scaled by [`crate::sim::RobotModel::payload_scale`]).
    pub baseline_mass_range: [f64; 2],
    pub bundle: BundleSpec,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            num_envs: 64,
            horizon: 64,
            phase1_iterations: 300,
            phase2_iterations: 150,
            baseline_iterations: 300,
            ppo: PpoConfig::default(),
            adam: AdamConfig::default(),
            cenet_lr_scale_phase2: 0.1,
            reward_scale: 0.02,
            positive_rewards_only: true,
            seed: 1,
            baseline_mass_range: [0.0, 10.0],
            bundle: BundleSpec::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        if self.num_envs == 0 || self.horizon == 0 {
            return Err(RlError::InvalidConfig("num_envs and horizon must be positive"));
        }
        if self.ppo.minibatches == 0 || self.num_envs * self.horizon < self.ppo.minibatches {
            return Err(RlError::InvalidConfig("minibatch count must be in 1..=num_envs*horizon"));
        }
        if !(self.ppo.clip > 0.0) || !(self.ppo.gamma > 0.0 && self.ppo.gamma <= 1.0) {
            return Err(RlError::InvalidConfig("clip must be positive and gamma in (0, 1]"));
        }
        if self.baseline_mass_range[0] > self.baseline_mass_range[1] {
            return Err(RlError::InvalidConfig("baseline mass range is reversed"));
        }
        Ok(())
    }
}

/// What one training iteration did; one metrics row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: u32,
    pub phase: Phase,
    /// Mean per-step total reward, unscaled.
    pub nominal_reward: f64,
    pub adaptive_reward: f64,
    /// Mean weighted value of each reward term.
    pub nominal_terms: [f64; NUM_TERMS],
    pub adaptive_terms: [f64; NUM_TERMS],
    pub episodes: u32,
    pub falls: u32,
    /// Over episodes that finished this iteration; NaN when none did.
    pub mean_episode_return: f64,
    pub mean_episode_length: f64,
    pub nominal: PpoStats,
    pub adaptive: Option<PpoStats>,
    pub cenet_loss: f64,
    pub cenet_velocity_loss: f64,
    pub cenet_recon_loss: f64,
    pub cenet_kl: f64,
}

struct Slot {
    env: Env,
    obs: EnvObservation,
    action: ([f64; NUM_JOINTS], [f64; NUM_JOINTS]),
    outcome: Option<Result<StepResult, SimError>>,
    finished: Option<(f64, u32, bool)>,
}

impl Slot {
    fn advance(&mut self) {
        let (a, d) = self.action;
        self.finished = None;
        let result = self.env.step(a, d).and_then(|r| {
            if r.termination.is_done() {
                self.finished = Some((
                    self.env.episode_return,
                    self.env.episode_steps,
                    r.termination == Termination::Fallen,
                ));
                self.env.reset()?;
                self.obs = self.env.observe();
            } else {
                self.obs = self.env.observe();
            }
            Ok(r)
        });
        self.outcome = Some(result);
    }
}

/// Synchronous PPO over a set of environments.
pub struct Trainer<X: Executor> {
    pub cfg: TrainConfig,
    pub settings: EnvSettings,
    pub bundle: PolicyBundle,
    pub iteration: u32,
    slots: Vec<Slot>,
    opt_nominal: Adam<f32>,
    opt_adaptive: Option<Adam<f32>>,
    opt_cenet: Adam<f32>,
    policy_rng: SimRng,
    update_rng: SimRng,
    executor: X,
}

impl<X: Executor> core::fmt::Debug for Trainer<X> {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("Trainer")
            .field("phase", &self.bundle.phase)
            .field("iteration", &self.iteration)
            .field("envs", &self.slots.len())
            .finish_non_exhaustive()
    }
}

const UPDATE_STREAM: u64 = u64::MAX;

impl<X: Executor> Trainer<X> {
    /// Fresh networks for phase 1 or the baseline.
    pub fn fresh(cfg: TrainConfig, settings: EnvSettings, phase: Phase, executor: X) -> Result<Self, RlError> {
        if phase == Phase::Two {
            return Err(RlError::PhaseMismatch("phase 2 starts from a phase-1 bundle"));
        }
        let mut init_rng = stream(cfg.seed, UPDATE_STREAM - 1);
        let bundle = PolicyBundle::new(cfg.bundle.clone(), phase, &mut init_rng);
        Self::with_bundle(cfg, settings, bundle, executor)
    }

    /// Phase 2 continues from the phase-1 networks.
    pub fn phase2(cfg: TrainConfig, settings: EnvSettings, mut bundle: PolicyBundle, executor: X) -> Result<Self, RlError> {
        if bundle.phase != Phase::One {
            return Err(RlError::PhaseMismatch("phase 2 requires a phase-1 bundle"));
        }
        bundle.phase = Phase::Two;
        Self::with_bundle(cfg, settings, bundle, executor)
    }

    /// Continues training `bundle` in its own phase.
    pub fn with_bundle(cfg: TrainConfig, settings: EnvSettings, bundle: PolicyBundle, executor: X) -> Result<Self, RlError> {
        cfg.validate()?;
        settings.validate().map_err(|error| RlError::Sim { iteration: 0, env: 0, error })?;
        if bundle.spec != cfg.bundle {
            return Err(RlError::PhaseMismatch("network layout differs from the training config"));
        }
        if bundle.phase.has_adaptive() != bundle.adaptive.is_some() {
            return Err(RlError::PhaseMismatch("adaptive networks do not match the phase tag"));
        }
        let phase = bundle.phase;
        let mut options = EnvOptions::training(match phase {
            Phase::Two => PayloadDriver::Randomized,
            Phase::One | Phase::Baseline => PayloadDriver::Off,
        });
        if phase == Phase::Baseline {
            let s = settings.model.payload_scale();
            options.base_mass_offset = Some(cfg.baseline_mass_range.map(|m| m * s));
        }
        let mut slots = Vec::with_capacity(cfg.num_envs);
        for i in 0..cfg.num_envs {
            let mut env = Env::new(settings.clone(), options.clone(), stream(cfg.seed, i as u64 + 1))
                .map_err(|error| RlError::Sim { iteration: 0, env: i, error })?;
            let obs = env.observe();
            slots.push(Slot { env, obs, action: ([0.0; NUM_JOINTS], [0.0; NUM_JOINTS]), outcome: None, finished: None });
        }
        let opt_nominal = Adam::new(cfg.adam.clone(), bundle.nominal_ids());
        let opt_adaptive = (phase == Phase::Two).then(|| Adam::new(cfg.adam.clone(), bundle.adaptive_ids()));
        let mut cenet_cfg = cfg.adam.clone();
        if phase == Phase::Two {
            cenet_cfg.lr *= cfg.cenet_lr_scale_phase2;
        }
        let opt_cenet = Adam::new(cenet_cfg, bundle.cenet_ids());
        Ok(Self {
            policy_rng: stream(cfg.seed, 0),
            update_rng: stream(cfg.seed, UPDATE_STREAM),
            cfg,
            settings,
            bundle,
            iteration: 0,
            slots,
            opt_nominal,
            opt_adaptive,
            opt_cenet,
            executor,
        })
    }

    pub fn phase(&self) -> Phase {
        self.bundle.phase
    }

    pub fn envs(&self) -> impl Iterator<Item = &Env> {
        self.slots.iter().map(|s| &s.env)
    }

    pub fn rng_state(&self) -> (RngState, RngState) {
        (RngState::capture(&self.policy_rng), RngState::capture(&self.update_rng))
    }

    /// Runs `iterations` iterations, reporting each.
    pub fn train(&mut self, iterations: u32, mut report: impl FnMut(&IterationStats)) -> Result<(), RlError> {
        for _ in 0..iterations {
            let stats = self.iterate()?;
            report(&stats);
        }
        Ok(())
    }

    /// One rollout plus one PPO update.
    pub fn iterate(&mut self) -> Result<IterationStats, RlError> {
        let (buffer, rollout) = self.collect()?;
        let update = self.update(&buffer)?;
        self.iteration += 1;
        Ok(IterationStats {
            iteration: self.iteration,
            phase: self.bundle.phase,
            nominal: update.nominal,
            adaptive: update.adaptive,
            cenet_loss: update.cenet[0],
            cenet_velocity_loss: update.cenet[1],
            cenet_recon_loss: update.cenet[2],
            cenet_kl: update.cenet[3],
            ..rollout
        })
    }

    fn collect(&mut self) -> Result<(RolloutBuffer, IterationStats), RlError> {
        let n = self.slots.len();
        let use_adaptive = self.bundle.adaptive_active();
        let spec = &self.bundle.spec;
        let mut buf = RolloutBuffer::new(n, spec.nominal_input(), use_adaptive.then(|| spec.adaptive_input()));
        let gamma = self.cfg.ppo.gamma;
        let scale = self.cfg.reward_scale;
        let shape = |r: f64| if self.cfg.positive_rewards_only { r.max(0.0) * scale } else { r * scale };
        let mut stats = empty_stats(self.iteration, self.bundle.phase);
        let (mut ret_sum, mut len_sum) = (0.0, 0.0);

        for _ in 0..self.cfg.horizon {
            let obs: Vec<&EnvObservation> = self.slots.iter().map(|s| &s.obs).collect();
            let act = self.bundle.act(&obs, ActMode::Sample(&mut self.policy_rng), use_adaptive)?;
            let critic_in = PolicyBundle::critic_inputs(&obs);
            let (vn, va) = self.bundle.values(&critic_in)?;
            drop(obs);
            for (i, slot) in self.slots.iter_mut().enumerate() {
                slot.action = act.applied(i, &self.bundle.spec);
            }
            self.executor.run(&mut self.slots, |_, s| s.advance());

            buf.history.extend_from_slice(&act.hist.data);
            buf.critic.extend_from_slice(&critic_in.data);
            push_policy(&mut buf.nominal, &act.nominal_in, &act.a, &act.a_logp, &vn);
            if let (Some(p), Some(x), Some(d), Some(l), Some(v)) =
                (buf.adaptive.as_mut(), &act.adaptive_in, &act.delta, &act.delta_logp, &va)
            {
                push_policy(p, x, d, l, v);
            }
            for (i, slot) in self.slots.iter_mut().enumerate() {
                let r = match slot.outcome.take() {
                    Some(Ok(r)) => r,
                    Some(Err(error)) => return Err(RlError::Sim { iteration: self.iteration, env: i, error }),
                    None => unreachable!("executor skipped an environment"),
                };
                let timeout = r.termination == Termination::Timeout;
                let mut rn = shape(r.nominal.total);
                if timeout {
                    rn += gamma * f64::from(vn.data[i]);
                }
                buf.nominal.rewards.push(rn);
                if let (Some(p), Some(v)) = (buf.adaptive.as_mut(), &va) {
                    let mut ra = shape(r.adaptive.total);
                    if timeout {
                        ra += gamma * f64::from(v.data[i]);
                    }
                    p.rewards.push(ra);
                }
                buf.dones.push(r.termination.is_done());
                buf.next_obs.extend_from_slice(&r.next_features);
                buf.v_true.extend(r.v_true.map(|v| v as f32));

                stats.nominal_reward += r.nominal.total;
                stats.adaptive_reward += r.adaptive.total;
                for k in 0..NUM_TERMS {
                    stats.nominal_terms[k] += r.nominal.weighted[k];
                    stats.adaptive_terms[k] += r.adaptive.weighted[k];
                }
                if let Some((ret, len, fell)) = slot.finished {
                    stats.episodes += 1;
                    stats.falls += u32::from(fell);
                    ret_sum += ret;
                    len_sum += f64::from(len);
                }
            }
        }

        let rows = buf.len() as f64;
        stats.nominal_reward /= rows;
        stats.adaptive_reward /= rows;
        stats.nominal_terms.iter_mut().chain(stats.adaptive_terms.iter_mut()).for_each(|v| *v /= rows);
        stats.mean_episode_return = ret_sum / f64::from(stats.episodes);
        stats.mean_episode_length = len_sum / f64::from(stats.episodes);

        let obs: Vec<&EnvObservation> = self.slots.iter().map(|s| &s.obs).collect();
        let (last_n, last_a) = self.bundle.values(&PolicyBundle::critic_inputs(&obs))?;
        let widen = |t: &Tensor<f32>| t.data.iter().map(|v| f64::from(*v)).collect::<Vec<f64>>();
        finish_policy(&mut buf.nominal, &buf.dones, &widen(&last_n), n, &self.cfg.ppo);
        if let (Some(p), Some(l)) = (buf.adaptive.as_mut(), &last_a) {
            finish_policy(p, &buf.dones, &widen(l), n, &self.cfg.ppo);
        }
        debug_assert!(buf.is_consistent());
        Ok((buf, stats))
    }

    fn update(&mut self, buf: &RolloutBuffer) -> Result<UpdateSummary, RlError> {
        let ppo = self.cfg.ppo.clone();
        let rows = buf.len();
        let mb = rows / ppo.minibatches;
        let mut idx: Vec<usize> = (0..rows).collect();
        let mut nominal = PolicyUpdate::default();
        let mut adaptive = buf.adaptive.as_ref().map(|_| PolicyUpdate::default());
        let mut cenet = [0.0; 4];
        let mut cenet_steps = 0.0;
        let frozen = if self.bundle.phase == Phase::One { self.bundle.adaptive_ids() } else { Vec::new() };
        let latent = self.bundle.spec.cenet.latent_dim;

        for epoch in 0..ppo.epochs {
            idx.shuffle(&mut self.update_rng);
            for m in 0..ppo.minibatches {
                let rows = &idx[m * mb..(m + 1) * mb];
                let first = epoch == 0 && m == 0;
                let critic_in = RolloutBuffer::gather(&buf.critic, CRITIC_DIM, rows);

                nominal.run(
                    self.bundle.nominal.clone(),
                    self.bundle.nominal_critic.clone(),
                    &mut self.bundle.store,
                    &mut self.opt_nominal,
                    minibatch(&buf.nominal, buf.nominal_dim, rows, critic_in.clone()),
                    &ppo,
                    first,
                )?;
                if let (Some(u), Some(p), Some(pol), Some(crit), Some(opt)) = (
                    adaptive.as_mut(),
                    buf.adaptive.as_ref(),
                    self.bundle.adaptive.clone(),
                    self.bundle.adaptive_critic.clone(),
                    self.opt_adaptive.as_mut(),
                ) {
                    u.run(pol, crit, &mut self.bundle.store, opt, minibatch(p, buf.adaptive_dim, rows, critic_in), &ppo, first)?;
                }

                let hist = RolloutBuffer::gather(&buf.history, HISTORY_DIM, rows);
                let o_next = RolloutBuffer::gather(&buf.next_obs, OBS_DIM, rows);
                let v_true = RolloutBuffer::gather(&buf.v_true, 2, rows);
                let eps = Tensor {
                    rows: rows.len(),
                    cols: latent,
                    data: (0..rows.len() * latent).map(|_| normal(&mut self.update_rng) as f32).collect(),
                };
                let mut g = Graph::new();
                let (h, o, v, e) = (g.input(hist), g.input(o_next), g.input(v_true), g.input(eps));
                let (_, loss) = self.bundle.cenet.loss(&mut g, &self.bundle.store, h, o, v, Some(e))?;
                for (acc, node) in cenet.iter_mut().zip([loss.total, loss.est, loss.recon, loss.kl]) {
                    *acc += f64::from(g.value(node).scalar());
                }
                cenet_steps += 1.0;
                g.backward(loss.total, &mut self.bundle.store)?;
                self.opt_cenet.step(&mut self.bundle.store);

                for id in &frozen {
                    assert!(
                        self.bundle.store.get(*id).grad.iter().all(|g| *g == 0.0),
                        "adaptive parameters received a gradient during phase 1"
                    );
                }
            }
        }
        cenet.iter_mut().for_each(|v| *v /= cenet_steps);
        Ok(UpdateSummary { nominal: nominal.finish(), adaptive: adaptive.map(PolicyUpdate::finish), cenet })
    }
}

fn empty_stats(iteration: u32, phase: Phase) -> IterationStats {
    IterationStats {
        iteration,
        phase,
        nominal_reward: 0.0,
        adaptive_reward: 0.0,
        nominal_terms: [0.0; NUM_TERMS],
        adaptive_terms: [0.0; NUM_TERMS],
        episodes: 0,
        falls: 0,
        mean_episode_return: f64::NAN,
        mean_episode_length: f64::NAN,
        nominal: PpoStats::default(),
        adaptive: None,
        cenet_loss: 0.0,
        cenet_velocity_loss: 0.0,
        cenet_recon_loss: 0.0,
        cenet_kl: 0.0,
    }
}

fn push_policy(p: &mut PolicyRollout, inputs: &Tensor<f32>, actions: &Tensor<f32>, logp: &Tensor<f32>, values: &Tensor<f32>) {
    p.inputs.extend_from_slice(&inputs.data);
    p.actions.extend_from_slice(&actions.data);
    p.logp.extend_from_slice(&logp.data);
    p.values.extend(values.data.iter().map(|v| f64::from(*v)));
}

fn finish_policy(p: &mut PolicyRollout, dones: &[bool], last: &[f64], n_envs: usize, cfg: &PpoConfig) {
    let (mut adv, ret) = compute_gae(&p.rewards, &p.values, dones, last, n_envs, cfg.gamma, cfg.lambda);
    normalize(&mut adv);
    p.advantages = adv;
    p.returns = ret;
}

fn minibatch(p: &PolicyRollout, dim: usize, rows: &[usize], critic_in: Tensor<f32>) -> PpoBatch<f32> {
    PpoBatch {
        inputs: RolloutBuffer::gather(&p.inputs, dim, rows),
        actions: RolloutBuffer::gather(&p.actions, NUM_JOINTS, rows),
        logp_old: RolloutBuffer::gather(&p.logp, 1, rows),
        advantages: RolloutBuffer::gather_scalars(&p.advantages, rows),
        returns: RolloutBuffer::gather_scalars(&p.returns, rows),
        critic_in,
    }
}

struct UpdateSummary {
    nominal: PpoStats,
    adaptive: Option<PpoStats>,
    cenet: [f64; 4],
}

#[derive(Default)]
struct PolicyUpdate {
    stats: PpoStats,
    stopped: bool,
}

impl PolicyUpdate {
    #[allow(clippy::too_many_arguments)]
    fn run(
        &mut self,
        policy: crate::nets::GaussianPolicy,
        critic: crate::nets::Mlp,
        store: &mut crate::nets::ParamStore<f32>,
        opt: &mut Adam<f32>,
        batch: PpoBatch<f32>,
        cfg: &PpoConfig,
        first: bool,
    ) -> Result<(), RlError> {
        if self.stopped {
            return Ok(());
        }
        let mut g = Graph::new();
        let loss = ppo_loss(&mut g, store, &policy, &critic, &batch, cfg)?;
        let (kl, clip_frac, dev) = ratio_stats(g.value(loss.ratio), cfg.clip);
        if first {
            self.stats.initial_ratio_dev = dev;
        }
        if kl > cfg.kl_limit {
            self.stopped = true;
            self.stats.early_stopped = true;
            return Ok(());
        }
        let s = &mut self.stats;
        s.policy_loss -= f64::from(g.value(loss.surrogate).scalar());
        s.value_loss += f64::from(g.value(loss.value).scalar());
        s.entropy += f64::from(g.value(loss.entropy).scalar());
        s.approx_kl += kl;
        s.clip_fraction += clip_frac;
        s.updates += 1;
        g.backward(loss.total, store)?;
        opt.step(store);
        Ok(())
    }

    fn finish(self) -> PpoStats {
        let mut s = self.stats;
        let n = f64::from(s.updates.max(1));
        s.policy_loss /= n;
        s.value_loss /= n;
        s.entropy /= n;
        s.approx_kl /= n;
        s.clip_fraction /= n;
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::executor::Sequential;
    use crate::sim::TerrainKind;

    fn tiny() -> (TrainConfig, EnvSettings) {
        let cfg = TrainConfig {
            num_envs: 4,
            horizon: 16,
            bundle: BundleSpec {
                policy_hidden: alloc::vec![32, 16],
                critic_hidden: alloc::vec![32, 16],
                ..Default::default()
            },
            ..Default::default()
        };
        let mut settings = EnvSettings::default();
        settings.terrain.kinds = alloc::vec![TerrainKind::Flat];
        (cfg, settings)
    }

    fn snapshot(b: &PolicyBundle, ids: &[crate::nets::ParamId]) -> Vec<Vec<f32>> {
        ids.iter().map(|id| b.store.get(*id).data.clone()).collect()
    }

    #[test]
    fn phase1_leaves_adaptive_parameters_bitwise_unchanged() {
        let (cfg, settings) = tiny();
        let mut t = Trainer::fresh(cfg, settings, Phase::One, Sequential).unwrap();
        let ids = t.bundle.adaptive_ids();
        let nominal_ids = t.bundle.nominal_ids();
        let before = snapshot(&t.bundle, &ids);
        let nominal_before = snapshot(&t.bundle, &nominal_ids);
        let stats = t.iterate().unwrap();
        assert_eq!(snapshot(&t.bundle, &ids), before);
        assert_ne!(snapshot(&t.bundle, &nominal_ids), nominal_before);
        assert!(stats.adaptive.is_none());
        assert!(stats.nominal.initial_ratio_dev < 1e-6);
    }

    #[test]
    fn phase2_updates_both_policies_with_unit_initial_ratio() {
        let (cfg, settings) = tiny();
        let p1 = Trainer::fresh(cfg.clone(), settings.clone(), Phase::One, Sequential).unwrap();
        let mut t = Trainer::phase2(cfg, settings, p1.bundle, Sequential).unwrap();
        let (a_ids, n_ids) = (t.bundle.adaptive_ids(), t.bundle.nominal_ids());
        let (a0, n0) = (snapshot(&t.bundle, &a_ids), snapshot(&t.bundle, &n_ids));
        let stats = t.iterate().unwrap();
        assert_ne!(snapshot(&t.bundle, &a_ids), a0);
        assert_ne!(snapshot(&t.bundle, &n_ids), n0);
        let adaptive = stats.adaptive.unwrap();
        assert!(stats.nominal.initial_ratio_dev < 1e-6);
        assert!(adaptive.initial_ratio_dev < 1e-6);
        assert!(t.envs().all(|e| e.payload.tray_mass == 0.25));
    }

    #[test]
    fn phase2_rejects_non_phase1_bundles() {
        let (cfg, settings) = tiny();
        let b = Trainer::fresh(cfg.clone(), settings.clone(), Phase::Baseline, Sequential).unwrap();
        assert!(matches!(
            Trainer::phase2(cfg, settings, b.bundle, Sequential),
            Err(RlError::PhaseMismatch(_))
        ));
    }

    #[test]
    fn training_is_deterministic_for_a_seed() {
        let (cfg, settings) = tiny();
        let run = || {
            let mut t = Trainer::fresh(cfg.clone(), settings.clone(), Phase::Baseline, Sequential).unwrap();
            let s = t.iterate().unwrap();
            (t.bundle.store, s.nominal_reward)
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(a, b);
        assert_eq!(ra.to_bits(), rb.to_bits());
    }

    #[test]
    fn baseline_offsets_are_drawn_from_scaled_range() {
        let (cfg, settings) = tiny();
        let scale = settings.model.payload_scale();
        let t = Trainer::fresh(cfg, settings, Phase::Baseline, Sequential).unwrap();
        for e in t.envs() {
            assert!((0.0..=10.0 * scale).contains(&e.mass_offset()));
        }
        assert!(t.bundle.store.ids_with_prefix("adaptive").is_empty());
    }
}
