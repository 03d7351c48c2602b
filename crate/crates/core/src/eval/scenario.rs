use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

use crate::obs::CommandScript;
use crate::sim::{PayloadProfile, PayloadSpec, TerrainProfile};

/// A scripted evaluation run: fixed terrain, commands and payload over time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub terrain: TerrainProfile,
    pub commands: CommandScript,
    pub payload: PayloadProfile,
    /// Seconds.
    pub duration: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum ScenarioError {
    NegativeDuration,
    /// A script has no key at t = 0.
    MissingStart(&'static str),
    /// Key times are not strictly increasing.
    NonMonotone { script: &'static str, index: usize },
    /// The payload profile ends before the scenario does.
    PayloadTooShort { end_time: f64, duration: f64 },
    NegativeMass { index: usize },
    NonFinite(&'static str),
    Terrain,
    Unknown(String),
}

impl fmt::Display for ScenarioError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScenarioError::NegativeDuration => write!(f, "scenario duration must be >= 0"),
            ScenarioError::MissingStart(s) => write!(f, "{s} script must start at t = 0"),
            ScenarioError::NonMonotone { script, index } => {
                write!(f, "{script} key {index} is not after the previous key")
            }
            ScenarioError::PayloadTooShort { end_time, duration } => {
                write!(f, "payload profile ends at {end_time} s but the scenario runs {duration} s")
            }
            ScenarioError::NegativeMass { index } => write!(f, "payload key {index} has a negative mass"),
            ScenarioError::NonFinite(what) => write!(f, "non-finite value in {what}"),
            ScenarioError::Terrain => write!(f, "terrain parameters out of range"),
            ScenarioError::Unknown(name) => write!(f, "no built-in scenario named {name:?}"),
        }
    }
}

impl core::error::Error for ScenarioError {}

fn check_times(script: &'static str, times: impl Iterator<Item = f64>) -> Result<(), ScenarioError> {
    let mut prev = f64::NEG_INFINITY;
    for (index, t) in times.enumerate() {
        if !t.is_finite() {
            return Err(ScenarioError::NonFinite(script));
        }
        if index == 0 && t != 0.0 {
            return Err(ScenarioError::MissingStart(script));
        }
        if t <= prev {
            return Err(ScenarioError::NonMonotone { script, index });
        }
        prev = t;
    }
    if prev == f64::NEG_INFINITY {
        return Err(ScenarioError::MissingStart(script));
    }
    Ok(())
}

impl Scenario {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if !self.duration.is_finite() {
            return Err(ScenarioError::NonFinite("duration"));
        }
        if self.duration < 0.0 {
            return Err(ScenarioError::NegativeDuration);
        }
        check_times("command", self.commands.keys.iter().map(|k| k.0))?;
        if self.commands.keys.iter().any(|&(_, vx, h)| !vx.is_finite() || !h.is_finite()) {
            return Err(ScenarioError::NonFinite("command"));
        }
        check_times("payload", self.payload.keys.iter().map(|k| k.0))?;
        for (index, (_, spec)) in self.payload.keys.iter().enumerate() {
            let masses = core::iter::once(spec.tray).chain(spec.balls);
            let mut any_negative = false;
            for m in masses {
                if !m.is_finite() {
                    return Err(ScenarioError::NonFinite("payload"));
                }
                any_negative |= m < 0.0;
            }
            if any_negative {
                return Err(ScenarioError::NegativeMass { index });
            }
        }
        if self.payload.end_time < self.duration {
            return Err(ScenarioError::PayloadTooShort { end_time: self.payload.end_time, duration: self.duration });
        }
        self.terrain.validate().map_err(|_| ScenarioError::Terrain)
    }

    /// Start times of the payload phases.
    pub fn phase_starts(&self) -> Vec<f64> {
        self.payload.keys.iter().map(|k| k.0).collect()
    }
}

/// Names of the built-in catalog, in catalog order.
pub const BUILTIN_NAMES: [&str; 4] = ["flat_steps", "stairs_steps", "progressive_load", "static_disks"];

const DEFAULT_HEIGHT: f64 = 0.28;

/// Piecewise-constant payload from `(start, kg)` pairs, spread over the four
/// ball slots and multiplied by `scale`.
fn steps(keys: &[(f64, f64)], scale: f64, end_time: f64) -> PayloadProfile {
    PayloadProfile { keys: keys.iter().map(|&(t, kg)| (t, PayloadSpec::even(kg * scale))).collect(), end_time }
}

/// The built-in catalog. Masses are quoted for a 12 kg robot and multiplied
/// by `scale`; pass `RobotModel::payload_scale()` for mass-ratio matched runs
/// or 1.0 for the unscaled values.
pub fn builtin_scenarios(scale: f64) -> Vec<Scenario> {
    vec![
        Scenario {
            name: "flat_steps".to_string(),
            terrain: TerrainProfile::flat(),
            commands: CommandScript::constant(0.4, DEFAULT_HEIGHT),
            payload: steps(&[(0.0, 0.0), (5.0, 4.0), (15.0, 0.0)], scale, 20.0),
            duration: 20.0,
        },
        Scenario {
            name: "stairs_steps".to_string(),
            terrain: TerrainProfile::stairs(0.08, 0.3, 1.0),
            commands: CommandScript::constant(0.3, DEFAULT_HEIGHT),
            payload: steps(
                &[(0.0, 0.0), (4.0, 2.0), (8.0, 4.0), (12.0, 6.0), (16.0, 3.0), (20.0, 1.0)],
                scale,
                24.0,
            ),
            duration: 24.0,
        },
        Scenario {
            name: "progressive_load".to_string(),
            terrain: TerrainProfile::flat(),
            commands: CommandScript::constant(0.3, DEFAULT_HEIGHT),
            payload: steps(
                &[(0.0, 0.0), (4.0, 2.0), (8.0, 4.0), (12.0, 6.0), (16.0, 8.0), (20.0, 10.0)],
                scale,
                24.0,
            ),
            duration: 24.0,
        },
        Scenario {
            name: "static_disks".to_string(),
            terrain: TerrainProfile::flat(),
            commands: CommandScript::constant(0.0, DEFAULT_HEIGHT),
            // +3 kg, +5 kg, -3 kg, -5 kg.
            payload: steps(&[(0.0, 0.0), (4.0, 3.0), (8.0, 8.0), (12.0, 5.0), (16.0, 0.0)], scale, 20.0),
            duration: 20.0,
        },
    ]
}

pub fn builtin_scenario(name: &str, scale: f64) -> Result<Scenario, ScenarioError> {
    builtin_scenarios(scale).into_iter().find(|s| s.name == name).ok_or_else(|| ScenarioError::Unknown(name.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::RobotModel;

    fn totals(s: &Scenario) -> Vec<f64> {
        s.payload.keys.iter().map(|(_, p)| p.total()).collect()
    }

    #[test]
    fn catalog_is_valid_and_named() {
        let all = builtin_scenarios(RobotModel::default().payload_scale());
        let names: Vec<&str> = all.iter().map(|s| s.name.as_str()).collect();
        assert_eq!(names, BUILTIN_NAMES);
        for s in &all {
            s.validate().unwrap();
        }
    }

    #[test]
    fn progressive_load_ends_at_ten_reference_kg() {
        let model = RobotModel::default();
        let s = builtin_scenario("progressive_load", model.payload_scale()).unwrap();
        let last = *totals(&s).last().unwrap();
        assert!((last - 10.0 * model.robot_mass() / 12.0).abs() < 1e-12);
        assert!(totals(&s).windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn stairs_has_six_phases() {
        let s = builtin_scenario("stairs_steps", 1.0).unwrap();
        assert_eq!(s.payload.keys.len(), 6);
        assert_eq!(s.phase_starts(), vec![0.0, 4.0, 8.0, 12.0, 16.0, 20.0]);
    }

    #[test]
    fn static_disks_add_then_remove() {
        let s = builtin_scenario("static_disks", 1.0).unwrap();
        let t = totals(&s);
        let changes: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        assert_eq!(changes, vec![3.0, 5.0, -3.0, -5.0]);
        assert_eq!(t[0], 0.0);
        assert_eq!(*t.last().unwrap(), 0.0);
    }

    #[test]
    fn flat_steps_has_four_kg_step() {
        let s = builtin_scenario("flat_steps", 1.0).unwrap();
        assert_eq!(totals(&s), vec![0.0, 4.0, 0.0]);
    }

    #[test]
    fn malformed_scripts_rejected() {
        let base = builtin_scenario("flat_steps", 1.0).unwrap();

        let mut s = base.clone();
        s.commands.keys = vec![(0.0, 0.4, 0.28), (3.0, 0.1, 0.28), (3.0, 0.2, 0.28)];
        assert_eq!(s.validate(), Err(ScenarioError::NonMonotone { script: "command", index: 2 }));

        let mut s = base.clone();
        s.payload.keys[0].0 = 0.5;
        assert_eq!(s.validate(), Err(ScenarioError::MissingStart("payload")));

        let mut s = base.clone();
        s.duration = 25.0;
        assert!(matches!(s.validate(), Err(ScenarioError::PayloadTooShort { .. })));

        let mut s = base.clone();
        s.payload.keys[1].1.balls[2] = -1.0;
        assert_eq!(s.validate(), Err(ScenarioError::NegativeMass { index: 1 }));

        let mut s = base.clone();
        s.commands.keys.clear();
        assert_eq!(s.validate(), Err(ScenarioError::MissingStart("command")));

        let mut s = base;
        s.duration = -1.0;
        assert_eq!(s.validate(), Err(ScenarioError::NegativeDuration));
    }

    #[test]
    fn unknown_name() {
        assert_eq!(builtin_scenario("moon", 1.0), Err(ScenarioError::Unknown("moon".to_string())));
    }
}
