//! Scripted evaluation scenarios, the live session shared with the telemetry
//! server, per-step metrics and controller comparisons.
//!
//! An evaluation rollout runs policy means with observation noise off. The
//! seed only selects the small joint perturbation at reset, so several seeds
//! give several nearby rollouts of the same script.

mod metrics;
mod scenario;
mod session;

pub use metrics::{
    compare, mean, median, metrics_from_trajectory, pearson, phase_at, Comparison, FallEvent, MetricColumns,
    MetricsTimeseries, PhaseDelta, PhaseSummary, Sample, Stat, Trajectory,
};
pub use scenario::{builtin_scenario, builtin_scenarios, Scenario, ScenarioError, BUILTIN_NAMES};
pub use session::{Controller, LiveSession, TickRecord};

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::nets::NetError;
use crate::rl::{CommandDriver, EnvOptions, EnvSettings, PayloadDriver, PolicyBundle};
use crate::rng::seeded;
use crate::sim::{SimError, Termination};

#[derive(Debug, Clone, PartialEq)]
pub enum EvalError {
    Scenario(ScenarioError),
    Sim(SimError),
    Net(NetError),
    NoController,
    MismatchedScenarios,
}

impl fmt::Display for EvalError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvalError::Scenario(e) => write!(f, "scenario: {e}"),
            EvalError::Sim(e) => write!(f, "simulation: {e}"),
            EvalError::Net(e) => write!(f, "network: {e}"),
            EvalError::NoController => write!(f, "no such controller"),
            EvalError::MismatchedScenarios => write!(f, "timeseries come from different scenarios or seeds"),
        }
    }
}

impl core::error::Error for EvalError {}

impl From<ScenarioError> for EvalError {
    fn from(e: ScenarioError) -> Self {
        EvalError::Scenario(e)
    }
}

impl From<SimError> for EvalError {
    fn from(e: SimError) -> Self {
        EvalError::Sim(e)
    }
}

impl From<NetError> for EvalError {
    fn from(e: NetError) -> Self {
        EvalError::Net(e)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub controller: String,
    /// Run the corrective policy but apply `Δa = 0`.
    pub zero_delta: bool,
}

impl EvalOptions {
    pub fn labelled(controller: &str) -> Self {
        Self { controller: controller.into(), zero_delta: false }
    }
}

/// Environment settings and options that play `scenario` exactly.
pub fn scenario_env(settings: &EnvSettings, scenario: &Scenario) -> (EnvSettings, EnvOptions) {
    let mut s = settings.clone();
    // Never time out before the script ends.
    s.sim.episode_length = scenario.duration + 2.0 * s.sim.control_dt();
    let mut opts = EnvOptions::evaluation(
        PayloadDriver::Scripted(scenario.payload.clone()),
        CommandDriver::Scripted(scenario.commands.clone()),
        scenario.terrain,
    );
    opts.joint_noise = true;
    (s, opts)
}

/// Number of control steps that fit in `duration`.
pub fn scenario_steps(settings: &EnvSettings, duration: f64) -> usize {
    libm::round(duration / settings.sim.control_dt()) as usize
}

/// Plays `scenario` with `bundle`. Stops at the first fall and records it.
pub fn run_scenario(
    bundle: &PolicyBundle,
    settings: &EnvSettings,
    scenario: &Scenario,
    seed: u64,
    options: &EvalOptions,
) -> Result<Trajectory, EvalError> {
    scenario.validate()?;
    let mut traj = Trajectory {
        scenario: scenario.name.clone(),
        controller: options.controller.clone(),
        seed,
        dt: settings.sim.control_dt(),
        phase_starts: scenario.phase_starts(),
        samples: Vec::new(),
        fall: None,
    };
    let steps = scenario_steps(settings, scenario.duration);
    if steps == 0 {
        return Ok(traj);
    }
    let (s, opts) = scenario_env(settings, scenario);
    let controller = Controller { label: options.controller.clone(), bundle: bundle.clone() };
    let mut session = LiveSession::new(s, opts, seeded(seed), vec![controller], 0)?;
    session.set_zero_delta(options.zero_delta);
    for k in 0..steps {
        let rec = session.tick()?;
        traj.samples.push(Sample::from_tick(&rec));
        if rec.step.termination == Termination::Fallen {
            let phase = phase_at(&traj.phase_starts, rec.t);
            traj.fall = Some(FallEvent { t: rec.state.time, step: k, phase });
            break;
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::obs::CommandScript;
    use crate::rl::{BundleSpec, Phase};
    use crate::rng::seeded;
    use crate::sim::{PayloadProfile, PayloadSpec, TerrainProfile};
    use alloc::string::ToString;

    fn bundle(phase: Phase) -> PolicyBundle {
        let spec = BundleSpec { policy_hidden: vec![16], critic_hidden: vec![16], ..Default::default() };
        PolicyBundle::new(spec, phase, &mut seeded(4))
    }

    fn short(duration: f64, keys: Vec<(f64, PayloadSpec)>) -> Scenario {
        Scenario {
            name: "short".to_string(),
            terrain: TerrainProfile::flat(),
            commands: CommandScript::constant(0.2, 0.28),
            payload: PayloadProfile { keys, end_time: duration },
            duration,
        }
    }

    fn stiff() -> EnvSettings {
        EnvSettings { actuators_per_joint: 4.0, ..Default::default() }
    }

    #[test]
    fn zero_duration_gives_empty_trajectory() {
        let sc = short(0.0, vec![(0.0, PayloadSpec::default())]);
        let t = run_scenario(&bundle(Phase::Two), &stiff(), &sc, 1, &EvalOptions::labelled("a")).unwrap();
        assert!(t.samples.is_empty());
        assert!(t.fall.is_none());
        assert!(metrics_from_trajectory(&t).columns.is_empty());
    }

    #[test]
    fn same_seed_same_trajectory() {
        let sc = short(0.6, vec![(0.0, PayloadSpec::default())]);
        let b = bundle(Phase::Two);
        let opts = EvalOptions::labelled("a");
        let a = run_scenario(&b, &stiff(), &sc, 7, &opts).unwrap();
        assert_eq!(a.samples.len(), 30);
        assert_eq!(a, run_scenario(&b, &stiff(), &sc, 7, &opts).unwrap());
        assert_ne!(a.samples, run_scenario(&b, &stiff(), &sc, 8, &opts).unwrap().samples);
    }

    #[test]
    fn payload_switches_on_the_scripted_step() {
        let sc = short(0.4, vec![(0.0, PayloadSpec::default()), (0.2, PayloadSpec::even(2.0))]);
        let t = run_scenario(&bundle(Phase::Two), &stiff(), &sc, 1, &EvalOptions::labelled("a")).unwrap();
        for s in &t.samples {
            let expect = if s.t < 0.2 - 1e-9 { 0.0 } else { 2.0 };
            assert_eq!(s.payload, expect, "t = {}", s.t);
        }
        assert!(t.samples.iter().any(|s| (s.t - 0.2).abs() < 1e-9 && s.payload == 2.0));
    }

    #[test]
    fn heavy_load_falls_and_halts() {
        let sc = short(10.0, vec![(0.0, PayloadSpec::even(200.0))]);
        let t = run_scenario(&bundle(Phase::Two), &EnvSettings::default(), &sc, 1, &EvalOptions::labelled("a")).unwrap();
        let fall = t.fall.expect("a 200 kg load must floor the robot");
        assert_eq!(t.samples.len(), fall.step + 1);
        assert!(t.samples.len() < 500);
        assert_eq!(metrics_from_trajectory(&t).falls, vec![fall]);
    }

    #[test]
    fn zeroed_delta_reproduces_nominal_only() {
        let sc = short(1.0, vec![(0.0, PayloadSpec::default()), (0.5, PayloadSpec::even(3.0))]);
        let two = bundle(Phase::Two);
        let zeroed = EvalOptions { controller: "a".into(), zero_delta: true };
        let with_zero = run_scenario(&two, &stiff(), &sc, 2, &zeroed).unwrap();

        let mut nominal_only = two.clone();
        nominal_only.phase = Phase::One;
        let plain = run_scenario(&nominal_only, &stiff(), &sc, 2, &EvalOptions::labelled("a")).unwrap();
        assert_eq!(with_zero, plain);

        let live = run_scenario(&two, &stiff(), &sc, 2, &EvalOptions::labelled("a")).unwrap();
        assert!(live.samples.iter().any(|s| s.delta.iter().any(|d| *d != 0.0)));
        assert_ne!(live.samples, plain.samples);
    }

    #[test]
    fn switch_controller_keeps_state() {
        let (s, o) = scenario_env(&stiff(), &short(1.0, vec![(0.0, PayloadSpec::default())]));
        let controllers = vec![
            Controller { label: "baseline".into(), bundle: bundle(Phase::Baseline) },
            Controller { label: "adaptive".into(), bundle: bundle(Phase::Two) },
        ];
        let mut live = LiveSession::new(s, o, seeded(1), controllers, 0).unwrap();
        for _ in 0..5 {
            assert!(live.tick().unwrap().delta.iter().all(|d| *d == 0.0));
        }
        let before = live.env.state.clone();
        live.switch_controller("adaptive").unwrap();
        assert_eq!(live.env.state, before);
        let rec = live.tick().unwrap();
        assert_eq!(rec.controller, 1);
        assert!((rec.t - 0.1).abs() < 1e-12);
        assert!(rec.delta.iter().any(|d| *d != 0.0));
        assert_eq!(live.switch_controller("other"), Err(EvalError::NoController));
    }
}
