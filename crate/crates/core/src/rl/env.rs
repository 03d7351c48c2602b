//! One simulated robot wrapped as a control-rate environment.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::kinematics::{action_to_target, estimate_ground_reactions, pd_torque, FootForceEstimate, PdGains};
use crate::obs::{
    build_augmented, build_observation, sample_command, AugmentedObservation, CommandRanges, CommandScript,
    CommandState, FeatureScaler, HistoryWindow, ObsNoise, Observation, AUG_DIM, HISTORY_DIM, OBS_DIM,
};
use crate::rewards::{adaptive_reward, nominal_reward, ActionHistory, FootSignal, RewardBreakdown, RewardConfig, StepSignals};
use crate::rng::{uniform, SimRng};
use crate::sim::{
    check_termination, payload_tick, reset, ContactReport, PayloadMode, PayloadProfile, PayloadSchedule, PayloadState,
    RobotModel, RobotState, SimConfig, SimError, Termination, TerrainKind, TerrainProfile, World, NUM_JOINTS,
};

use super::bundle::CRITIC_DIM;

/// Static description shared by every environment of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvSettings {
    pub model: RobotModel,
    pub sim: SimConfig,
    pub pd: PdGains,
    pub rewards: RewardConfig,
    pub commands: CommandRanges,
    pub noise: ObsNoise,
    pub payload: PayloadSchedule,
    pub terrain: TerrainCurriculum,
    /// Half-width of the uniform joint perturbation at reset, rad.
    pub reset_joint_noise: f64,
    /// Multiplier on estimated foot forces inside `õ_t`; `None` uses `1 / (m_r g)`.
    pub force_scale: Option<f64>,
    /// Actuators driving each planar joint. A planar leg stands for a
    /// left/right pair, so gains and torque limit are per actuator times this.
    pub actuators_per_joint: f64,
}

impl Default for EnvSettings {
    fn default() -> Self {
        Self {
            model: RobotModel::default(),
            sim: SimConfig::default(),
            pd: PdGains::default(),
            rewards: RewardConfig::default(),
            commands: CommandRanges::default(),
            noise: ObsNoise::default(),
            payload: PayloadSchedule::default(),
            terrain: TerrainCurriculum::default(),
            reset_joint_noise: 0.05,
            force_scale: None,
            actuators_per_joint: 2.0,
        }
    }
}

impl EnvSettings {
    pub fn validate(&self) -> Result<(), SimError> {
        self.model.validate()?;
        self.sim.validate()?;
        if !(self.actuators_per_joint > 0.0) {
            return Err(SimError::InvalidConfig("actuators_per_joint must be positive"));
        }
        if self.terrain.kinds.is_empty() {
            return Err(SimError::InvalidConfig("terrain curriculum has no kinds"));
        }
        Ok(())
    }

    pub fn force_scale(&self) -> f64 {
        self.force_scale.unwrap_or_else(|| 1.0 / (self.model.robot_mass() * self.sim.gravity))
    }

    /// PD gains of one planar joint.
    pub fn joint_gains(&self) -> PdGains {
        PdGains { kp: self.pd.kp * self.actuators_per_joint, kd: self.pd.kd * self.actuators_per_joint }
    }

    /// Torque limit of one planar joint, N·m.
    pub fn joint_torque_limit(&self) -> f64 {
        self.model.torque_limit * self.actuators_per_joint
    }

    pub fn scaler(&self) -> FeatureScaler {
        FeatureScaler { theta_stand: self.model.theta_stand, height_center: 0.5 * (self.commands.height[0] + self.commands.height[1]) }
    }
}

/// Terrain drawn at each training reset, uniformly over `kinds`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerrainCurriculum {
    pub kinds: Vec<TerrainKind>,
    /// Slope magnitude, rad; the sign is drawn per episode.
    pub slope_angle: f64,
    pub stair_rise: f64,
    pub stair_run: f64,
    /// Range of the slope and stair origin relative to the start position, m.
    pub origin_range: [f64; 2],
}

impl Default for TerrainCurriculum {
    fn default() -> Self {
        Self {
            kinds: alloc::vec![TerrainKind::Flat, TerrainKind::Slope, TerrainKind::Stairs],
            slope_angle: 10f64.to_radians(),
            stair_rise: 0.08,
            stair_run: 0.3,
            origin_range: [0.0, 1.0],
        }
    }
}

impl TerrainCurriculum {
    pub fn sample(&self, rng: &mut SimRng) -> TerrainProfile {
        let kind = self.kinds[rng_index(rng, self.kinds.len())];
        let origin = uniform(rng, self.origin_range[0], self.origin_range[1]);
        match kind {
            TerrainKind::Flat => TerrainProfile::flat(),
            TerrainKind::Slope => {
                let sign = if uniform(rng, 0.0, 1.0) < 0.5 { -1.0 } else { 1.0 };
                TerrainProfile::slope(sign * self.slope_angle, origin)
            }
            TerrainKind::Stairs => TerrainProfile::stairs(self.stair_rise, self.stair_run, origin),
        }
    }
}

fn rng_index(rng: &mut SimRng, n: usize) -> usize {
    use rand::Rng;
    rng.random_range(0..n)
}

#[derive(Debug, Clone, PartialEq)]
pub enum PayloadDriver {
    /// Empty tray, no balls.
    Off,
    /// Tray plus randomized balls at reset, resampled on the schedule.
    Randomized,
    Scripted(PayloadProfile),
    /// Set from outside through [`Env::set_payload`].
    Operator,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommandDriver {
    Sampled,
    Scripted(CommandScript),
    /// Set from outside through [`Env::set_command`].
    Operator,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TerrainSource {
    Curriculum,
    Fixed(TerrainProfile),
}

/// Per-environment behaviour.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvOptions {
    pub payload: PayloadDriver,
    pub commands: CommandDriver,
    pub terrain: TerrainSource,
    /// Add uniform observation noise.
    pub noisy: bool,
    /// Base-mass offset range drawn at every reset, kg; `None` keeps the nominal trunk.
    pub base_mass_offset: Option<[f64; 2]>,
    pub start_x: f64,
    pub joint_noise: bool,
}

impl EnvOptions {
    pub fn training(payload: PayloadDriver) -> Self {
        Self {
            payload,
            commands: CommandDriver::Sampled,
            terrain: TerrainSource::Curriculum,
            noisy: true,
            base_mass_offset: None,
            start_x: 0.0,
            joint_noise: true,
        }
    }

    pub fn evaluation(payload: PayloadDriver, commands: CommandDriver, terrain: TerrainProfile) -> Self {
        Self {
            payload,
            commands,
            terrain: TerrainSource::Fixed(terrain),
            noisy: false,
            base_mass_offset: None,
            start_x: 0.0,
            joint_noise: false,
        }
    }
}

/// Policy inputs at one decision point, already scaled for the networks.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvObservation {
    pub obs: Observation,
    pub aug: AugmentedObservation,
    pub forces: [FootForceEstimate; 2],
    pub features: [f32; OBS_DIM],
    pub aug_features: [f32; AUG_DIM],
    pub history: [f32; HISTORY_DIM],
    /// Privileged critic input built from the noise-free state.
    pub critic: [f32; CRITIC_DIM],
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub nominal: RewardBreakdown,
    pub adaptive: RewardBreakdown,
    pub termination: Termination,
    /// Noise-free scaled observation after the step; the decoder target.
    pub next_features: [f32; OBS_DIM],
    /// Trunk (vx, vz) after the step; the velocity-estimator target.
    pub v_true: [f64; 2],
    /// Mean |τ| over joints and physics substeps, N·m.
    pub torque_effort: f64,
    pub contacts: ContactReport,
    pub height: f64,
    pub applied: [f64; NUM_JOINTS],
}

#[derive(Debug, Clone)]
pub struct Env {
    pub settings: EnvSettings,
    pub options: EnvOptions,
    pub world: World,
    pub state: RobotState,
    pub payload: PayloadState,
    pub cmd: CommandState,
    pub rng: SimRng,
    scaler: FeatureScaler,
    nominal_model: RobotModel,
    next_cmd_time: f64,
    history: HistoryWindow<f32, OBS_DIM>,
    prev_applied: [f64; NUM_JOINTS],
    nominal_actions: ActionHistory,
    adaptive_actions: ActionHistory,
    last_torques: [f64; NUM_JOINTS],
    last_contacts: ContactReport,
    mass_offset: f64,
    pub episode_return: f64,
    pub episode_steps: u32,
}

impl Env {
    pub fn new(settings: EnvSettings, options: EnvOptions, rng: SimRng) -> Result<Self, SimError> {
        settings.validate()?;
        let terrain = match &options.terrain {
            TerrainSource::Fixed(t) => *t,
            TerrainSource::Curriculum => TerrainProfile::flat(),
        };
        let world = World::new(settings.model.clone(), settings.sim.clone(), terrain)?;
        let mut env = Self {
            scaler: settings.scaler(),
            nominal_model: settings.model.clone(),
            state: reset(&world, options.start_x, 0.0, &mut crate::rng::seeded(0)),
            world,
            payload: PayloadState::default(),
            cmd: settings.commands.midpoint(),
            rng,
            next_cmd_time: 0.0,
            history: HistoryWindow::default(),
            prev_applied: [0.0; NUM_JOINTS],
            nominal_actions: ActionHistory::default(),
            adaptive_actions: ActionHistory::default(),
            last_torques: [0.0; NUM_JOINTS],
            last_contacts: ContactReport::default(),
            mass_offset: 0.0,
            episode_return: 0.0,
            episode_steps: 0,
            settings,
            options,
        };
        env.reset()?;
        Ok(env)
    }

    /// Starts a new episode. Call [`Env::observe`] for the first decision point.
    pub fn reset(&mut self) -> Result<(), SimError> {
        if let TerrainSource::Curriculum = self.options.terrain {
            self.world.terrain = self.settings.terrain.sample(&mut self.rng);
        }
        self.mass_offset = match self.options.base_mass_offset {
            Some([lo, hi]) => uniform(&mut self.rng, lo, hi),
            None => 0.0,
        };
        self.world.model.base_mass = self.nominal_model.base_mass + self.mass_offset;
        let noise = if self.options.joint_noise { self.settings.reset_joint_noise } else { 0.0 };
        self.state = reset(&self.world, self.options.start_x, noise, &mut self.rng);

        self.payload = match &self.options.payload {
            PayloadDriver::Off => PayloadState::default(),
            PayloadDriver::Randomized => {
                payload_tick(&PayloadState::default(), 0.0, &mut self.rng, PayloadMode::Init, &self.settings.payload)?
            }
            PayloadDriver::Scripted(p) => {
                payload_tick(&PayloadState::default(), 0.0, &mut self.rng, PayloadMode::Scripted(p), &self.settings.payload)?
            }
            PayloadDriver::Operator => self.payload,
        };
        match &self.options.commands {
            CommandDriver::Sampled => {
                self.cmd = sample_command(&mut self.rng, &self.settings.commands);
                self.next_cmd_time = self.settings.commands.resample_period;
            }
            CommandDriver::Scripted(s) => {
                self.cmd = s.at(0.0).ok_or(SimError::ProfileExhausted { time: 0.0 })?;
            }
            CommandDriver::Operator => {}
        }
        self.history.clear();
        self.prev_applied = [0.0; NUM_JOINTS];
        self.nominal_actions = ActionHistory::default();
        self.adaptive_actions = ActionHistory::default();
        self.last_torques = [0.0; NUM_JOINTS];
        self.last_contacts = ContactReport::default();
        self.episode_return = 0.0;
        self.episode_steps = 0;
        Ok(())
    }

    /// Builds the decision-point observation and pushes it into the history.
    /// Call exactly once per control step.
    pub fn observe(&mut self) -> EnvObservation {
        let obs = if self.options.noisy {
            build_observation(&self.state, &self.cmd, &self.prev_applied, Some((&self.settings.noise, &mut self.rng)))
        } else {
            build_observation::<SimRng>(&self.state, &self.cmd, &self.prev_applied, None)
        };
        let forces = self.force_estimate();
        let aug = build_augmented(&obs, &forces, self.settings.force_scale());
        let features = self.scaler.features(&obs);
        let mut aug_features = [0.0; AUG_DIM];
        self.scaler.apply_augmented(&aug, &mut aug_features);
        self.history.push(features);
        let mut history = [0.0; HISTORY_DIM];
        self.history.flatten_into(&mut history);
        EnvObservation { obs, aug, forces, features, aug_features, history, critic: self.critic_features() }
    }

    fn force_estimate(&self) -> [FootForceEstimate; 2] {
        estimate_ground_reactions(&self.world.model, &self.state.theta, self.state.base_pitch, &self.last_torques)
    }

    fn clean_features(&self) -> [f32; OBS_DIM] {
        self.scaler.features(&build_observation::<SimRng>(&self.state, &self.cmd, &self.prev_applied, None))
    }

    fn critic_features(&self) -> [f32; CRITIC_DIM] {
        let mut c = [0.0; CRITIC_DIM];
        c[..OBS_DIM].copy_from_slice(&self.clean_features());
        c[OBS_DIM] = self.state.base_vel[0] as f32;
        c[OBS_DIM + 1] = self.state.base_vel[1] as f32;
        c[OBS_DIM + 2] = ((self.payload.total() + self.mass_offset) * 0.1) as f32;
        let scale = self.settings.force_scale();
        for (i, foot) in self.last_contacts.feet.iter().enumerate() {
            c[OBS_DIM + 3 + 2 * i] = (foot.grf[0] * scale) as f32;
            c[OBS_DIM + 4 + 2 * i] = (foot.grf[1] * scale) as f32;
        }
        c
    }

    /// Applies `a + Δa` for one control step. Does not reset on termination.
    pub fn step(&mut self, nominal: [f64; NUM_JOINTS], delta: [f64; NUM_JOINTS]) -> Result<StepResult, SimError> {
        let applied: [f64; NUM_JOINTS] = core::array::from_fn(|j| nominal[j] + delta[j]);
        let target = action_to_target(&applied, &self.world.model);
        debug_assert!((0..NUM_JOINTS).all(|j| {
            let lim = self.world.model.joint_limits[j];
            let unclamped = self.world.model.theta_stand[j] + nominal[j] + delta[j];
            (target[j] - unclamped.clamp(lim[0], lim[1])).abs() < 1e-12
        }));

        let theta_dot_before = self.state.theta_dot;
        let substeps = self.world.cfg.control_decimation;
        let mut effort = 0.0;
        let (gains, limit) = (self.settings.joint_gains(), self.settings.joint_torque_limit());
        for _ in 0..substeps {
            let tau = pd_torque(
                &target,
                &self.state.theta,
                &self.state.theta_dot,
                gains,
                limit,
            );
            let (next, report) = self.world.step(&self.state, &tau, &self.payload)?;
            effort += tau.iter().map(|t| t.abs()).sum::<f64>();
            self.state = next;
            self.last_contacts = report;
            self.last_torques = tau;
        }
        let effort = effort / (f64::from(substeps) * NUM_JOINTS as f64);
        let t = self.state.time;

        match &self.options.payload {
            PayloadDriver::Randomized => {
                self.payload =
                    payload_tick(&self.payload, t, &mut self.rng, PayloadMode::ResampleLoop, &self.settings.payload)?;
            }
            PayloadDriver::Scripted(p) => {
                self.payload = payload_tick(&self.payload, t, &mut self.rng, PayloadMode::Scripted(p), &self.settings.payload)?;
            }
            PayloadDriver::Off | PayloadDriver::Operator => {}
        }
        match &self.options.commands {
            CommandDriver::Sampled => {
                if t + 1e-9 >= self.next_cmd_time {
                    self.cmd.refresh(&mut self.rng, &self.settings.commands);
                    self.next_cmd_time += self.settings.commands.resample_period;
                }
            }
            CommandDriver::Scripted(s) => {
                if let Some(c) = s.at(t) {
                    self.cmd = c;
                }
            }
            CommandDriver::Operator => {}
        }

        self.prev_applied = applied;
        self.nominal_actions.push(nominal);
        self.adaptive_actions.push(delta);

        let signals = self.signals(&theta_dot_before);
        let rn = nominal_reward(&signals, &self.nominal_actions, &self.settings.rewards);
        let ra = adaptive_reward(&signals, &self.adaptive_actions, &self.settings.rewards);
        self.episode_return += rn.total;
        self.episode_steps += 1;

        Ok(StepResult {
            nominal: rn,
            adaptive: ra,
            termination: check_termination(&self.world, &self.state),
            next_features: self.clean_features(),
            v_true: self.state.base_vel,
            torque_effort: effort,
            contacts: self.last_contacts,
            height: signals.height,
            applied,
        })
    }

    fn signals(&self, theta_dot_before: &[f64; NUM_JOINTS]) -> StepSignals {
        let s = &self.state;
        let dt = self.world.cfg.control_dt();
        let feet = self.world.foot_kinematics(s);
        StepSignals {
            vx: s.base_vel[0],
            vz: s.base_vel[1],
            pitch: s.base_pitch,
            pitch_rate: s.pitch_rate,
            height: self.world.base_height(s),
            cmd_vx: self.cmd.vx,
            cmd_height: self.cmd.height,
            theta_dot: s.theta_dot,
            theta_ddot: core::array::from_fn(|j| (s.theta_dot[j] - theta_dot_before[j]) / dt),
            torques: self.last_torques,
            feet: core::array::from_fn(|i| {
                let (pos, vel) = feet[i];
                FootSignal {
                    height: pos[1] - self.world.terrain.height(pos[0]),
                    vx: vel[0],
                    in_contact: self.last_contacts.feet[i].in_contact,
                }
            }),
            forces: self.force_estimate(),
            robot_mass: self.world.model.robot_mass(),
            payload_mass: self.payload.total(),
            gravity: self.world.cfg.gravity,
        }
    }

    pub fn set_payload(&mut self, payload: PayloadState) {
        self.payload = payload;
    }

    pub fn set_command(&mut self, cmd: CommandState) {
        self.cmd = cmd;
    }

    pub fn mass_offset(&self) -> f64 {
        self.mass_offset
    }

    pub fn prev_applied(&self) -> [f64; NUM_JOINTS] {
        self.prev_applied
    }

    pub fn last_torques(&self) -> [f64; NUM_JOINTS] {
        self.last_torques
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::sim::PayloadSpec;

    fn flat_eval(payload: PayloadDriver) -> Env {
        let opts = EnvOptions::evaluation(payload, CommandDriver::Scripted(CommandScript::constant(0.0, 0.28)), TerrainProfile::flat());
        // stiff enough to hold the standing pose without a policy
        let settings = EnvSettings { actuators_per_joint: 4.0, ..Default::default() };
        Env::new(settings, opts, stream(3, 1)).unwrap()
    }

    #[test]
    fn history_fills_one_frame_per_observation() {
        let mut env = flat_eval(PayloadDriver::Off);
        env.reset().unwrap();
        let first = env.observe();
        // oldest frames are zero padding, newest frame is last
        assert!(first.history[..OBS_DIM * 4].iter().all(|v| *v == 0.0));
        assert_eq!(&first.history[OBS_DIM * 4..], &first.features);
        env.step([0.0; 4], [0.0; 4]).unwrap();
        let second = env.observe();
        assert_eq!(&second.history[OBS_DIM * 3..OBS_DIM * 4], &first.features);
    }

    #[test]
    fn standing_still_keeps_running() {
        let mut env = flat_eval(PayloadDriver::Off);
        for _ in 0..100 {
            env.observe();
            let r = env.step([0.0; 4], [0.0; 4]).unwrap();
            assert_eq!(r.termination, Termination::Running);
        }
        assert!((env.world.base_height(&env.state) - env.settings.model.stand_height()).abs() < 0.05);
    }

    #[test]
    fn scripted_payload_follows_profile() {
        let profile = PayloadProfile {
            keys: alloc::vec![(0.0, PayloadSpec::even(1.0)), (0.5, PayloadSpec::even(3.0))],
            end_time: 2.0,
        };
        let mut env = flat_eval(PayloadDriver::Scripted(profile));
        assert!((env.payload.total() - 1.0).abs() < 1e-12);
        for _ in 0..30 {
            env.observe();
            env.step([0.0; 4], [0.0; 4]).unwrap();
        }
        assert!((env.payload.total() - 3.0).abs() < 1e-12);
    }

    #[test]
    fn randomized_payload_starts_in_init_range() {
        let opts = EnvOptions::training(PayloadDriver::Randomized);
        let env = Env::new(EnvSettings::default(), opts, stream(9, 2)).unwrap();
        assert_eq!(env.payload.tray_mass, 0.25);
        assert!(env.payload.ball_masses.iter().all(|m| (0.0..=1.0).contains(m)));
    }

    #[test]
    fn mass_offset_changes_trunk_and_critic_slot() {
        let mut opts = EnvOptions::training(PayloadDriver::Off);
        opts.base_mass_offset = Some([2.0, 2.0]);
        let mut env = Env::new(EnvSettings::default(), opts, stream(9, 2)).unwrap();
        env.reset().unwrap();
        let obs = env.observe();
        assert!((env.world.model.base_mass - env.settings.model.base_mass - 2.0).abs() < 1e-12);
        assert!((obs.critic[OBS_DIM + 2] - 0.2).abs() < 1e-6);
    }

    #[test]
    fn sampled_commands_refresh_on_period() {
        let mut env = Env::new(EnvSettings::default(), EnvOptions::training(PayloadDriver::Off), stream(4, 4)).unwrap();
        let first = env.cmd;
        let steps = (env.settings.commands.resample_period / env.world.cfg.control_dt()).round() as usize;
        for i in 0..steps {
            env.observe();
            let r = env.step([0.0; 4], [0.0; 4]).unwrap();
            if r.termination.is_done() {
                return;
            }
            if i + 1 < steps {
                assert_eq!(env.cmd, first);
            }
        }
        assert_ne!(env.cmd, first);
    }

    #[test]
    fn delta_adds_to_nominal_target() {
        let mut a = flat_eval(PayloadDriver::Off);
        let mut b = flat_eval(PayloadDriver::Off);
        let r1 = a.step([0.1, -0.1, 0.0, 0.05], [0.0, 0.1, 0.02, -0.05]).unwrap();
        let r2 = b.step([0.1, 0.0, 0.02, 0.0], [0.0; 4]).unwrap();
        assert_eq!(a.state, b.state);
        assert_eq!(r1.applied, r2.applied);
    }
}
