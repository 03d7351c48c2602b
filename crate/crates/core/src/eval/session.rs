use alloc::string::String;
use alloc::vec::Vec;

use crate::kinematics::FootForceEstimate;
use crate::obs::CommandState;
use crate::rl::{ActMode, Env, EnvObservation, EnvOptions, EnvSettings, PolicyBundle, StepResult, TerrainSource};
use crate::rng::SimRng;
use crate::sim::{PayloadState, RobotState, SimError, TerrainProfile, NUM_JOINTS};

use super::EvalError;

/// A loaded policy bundle under a display label.
#[derive(Debug, Clone, PartialEq)]
pub struct Controller {
    pub label: String,
    pub bundle: PolicyBundle,
}

/// Everything that happened in one control tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    /// Simulation time at the start of the tick.
    pub t: f64,
    /// Command and payload in effect during the tick.
    pub cmd: CommandState,
    pub payload: PayloadState,
    /// Clipped nominal and corrective actions sent to the joints.
    pub action: [f64; NUM_JOINTS],
    pub delta: [f64; NUM_JOINTS],
    pub step: StepResult,
    /// State after the tick.
    pub state: RobotState,
    /// Torque-based foot force estimate at the next decision point.
    pub forces: [FootForceEstimate; 2],
    pub controller: usize,
}

/// A single environment driven by deterministic policy means. Shared by the
/// scripted evaluation runner and the live telemetry server.
#[derive(Debug, Clone)]
pub struct LiveSession {
    pub env: Env,
    controllers: Vec<Controller>,
    active: usize,
    zero_delta: bool,
    obs: EnvObservation,
}

impl LiveSession {
    pub fn new(
        settings: EnvSettings,
        options: EnvOptions,
        rng: SimRng,
        controllers: Vec<Controller>,
        active: usize,
    ) -> Result<Self, EvalError> {
        if active >= controllers.len() {
            return Err(EvalError::NoController);
        }
        let mut env = Env::new(settings, options, rng)?;
        let obs = env.observe();
        Ok(Self { env, controllers, active, zero_delta: false, obs })
    }

    pub fn controllers(&self) -> &[Controller] {
        &self.controllers
    }

    pub fn active(&self) -> &Controller {
        &self.controllers[self.active]
    }

    pub fn active_index(&self) -> usize {
        self.active
    }

    /// Takes effect at the next tick. History and state carry over.
    pub fn switch_controller(&mut self, label: &str) -> Result<(), EvalError> {
        let idx = self.controllers.iter().position(|c| c.label == label).ok_or(EvalError::NoController)?;
        self.active = idx;
        Ok(())
    }

    /// Evaluate the corrective policy but send `Δa = 0` instead of its output.
    pub fn set_zero_delta(&mut self, on: bool) {
        self.zero_delta = on;
    }

    pub fn observation(&self) -> &EnvObservation {
        &self.obs
    }

    /// New episode; `terrain` replaces a fixed terrain when given.
    pub fn reset(&mut self, terrain: Option<TerrainProfile>) -> Result<(), SimError> {
        if let Some(t) = terrain {
            t.validate()?;
            self.env.options.terrain = TerrainSource::Fixed(t);
            self.env.world.terrain = t;
        }
        self.env.reset()?;
        self.obs = self.env.observe();
        Ok(())
    }

    /// Acts on the current observation, steps one control period and
    /// observes the next decision point. Never resets.
    pub fn tick(&mut self) -> Result<TickRecord, EvalError> {
        let ctrl = &self.controllers[self.active];
        let bundle = &ctrl.bundle;
        let act = bundle.act(&[&self.obs], ActMode::Deterministic, bundle.adaptive_active())?;
        let (action, mut delta) = act.applied(0, &bundle.spec);
        if self.zero_delta {
            delta = [0.0; NUM_JOINTS];
        }
        let t = self.env.state.time;
        let cmd = self.env.cmd;
        let payload = self.env.payload;
        let step = self.env.step(action, delta)?;
        self.obs = self.env.observe();
        Ok(TickRecord {
            t,
            cmd,
            payload,
            action,
            delta,
            step,
            state: self.env.state.clone(),
            forces: self.obs.forces,
            controller: self.active,
        })
    }
}
