use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{RobotModel, SimError};
use crate::rng::uniform;

/// Fore/aft positions of the four ball slots on the tray, trunk frame, m.
pub const TRAY_SLOTS: [f64; 4] = [-0.1, -0.033, 0.033, 0.1];

/// Tolerance for comparing accumulated simulation time against schedule times.
const TIME_EPS: f64 = 1e-9;

/// Tray and ball masses carried on the trunk.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PayloadState {
    pub tray_mass: f64,
    pub ball_masses: [f64; 4],
    /// Payload centre of mass along the trunk, m (0 when empty).
    pub com_offset_x: f64,
    pub next_resample_time: f64,
}

/// A fixed payload configuration, used by scripts and operator commands.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadSpec {
    #[serde(default)]
    pub tray: f64,
    #[serde(default)]
    pub balls: [f64; 4],
}

impl PayloadSpec {
    /// `total` kg spread evenly over the four slots (centred CoM).
    pub fn even(total: f64) -> Self {
        Self { tray: 0.0, balls: [total / 4.0; 4] }
    }

    pub fn total(&self) -> f64 {
        self.tray + self.balls.iter().sum::<f64>()
    }
}

/// Step profile of payload masses over time; no interpolation between keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadProfile {
    /// `(start_time, masses)` pairs with strictly increasing times.
    pub keys: Vec<(f64, PayloadSpec)>,
    pub end_time: f64,
}

impl PayloadProfile {
    pub fn at(&self, t: f64) -> Option<PayloadSpec> {
        if t > self.end_time + TIME_EPS {
            return None;
        }
        self.keys.iter().rev().find(|(start, _)| *start <= t + TIME_EPS).map(|(_, spec)| *spec)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PayloadMode<'a> {
    /// Episode start: fixed tray plus freshly sampled balls.
    Init,
    /// Resample every ball whenever the schedule time is reached.
    ResampleLoop,
    Scripted(&'a PayloadProfile),
}

/// Constants of the randomized payload process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PayloadSchedule {
    pub tray_mass: f64,
    pub init_ball_range: [f64; 2],
    pub resample_ball_range: [f64; 2],
    pub resample_period: f64,
}

impl Default for PayloadSchedule {
    fn default() -> Self {
        Self {
            tray_mass: 0.25,
            init_ball_range: [0.0, 1.0],
            resample_ball_range: [0.0, 2.5],
            resample_period: 4.0,
        }
    }
}

impl PayloadState {
    pub fn from_spec(spec: &PayloadSpec) -> Self {
        let mut state = Self { tray_mass: spec.tray, ball_masses: spec.balls, ..Self::default() };
        state.update_com();
        state
    }

    pub fn total(&self) -> f64 {
        self.tray_mass + self.ball_masses.iter().sum::<f64>()
    }

    pub fn spec(&self) -> PayloadSpec {
        PayloadSpec { tray: self.tray_mass, balls: self.ball_masses }
    }

    fn update_com(&mut self) {
        let total = self.total();
        self.com_offset_x = if total > 0.0 {
            self.ball_masses.iter().zip(TRAY_SLOTS).map(|(m, x)| m * x).sum::<f64>() / total
        } else {
            0.0
        };
    }
}

/// Advances the payload process to simulation time `t`.
pub fn payload_tick<R: Rng + ?Sized>(
    payload: &PayloadState,
    t: f64,
    rng: &mut R,
    mode: PayloadMode<'_>,
    schedule: &PayloadSchedule,
) -> Result<PayloadState, SimError> {
    let mut next = *payload;
    match mode {
        PayloadMode::Init => {
            next.tray_mass = schedule.tray_mass;
            let [lo, hi] = schedule.init_ball_range;
            for m in &mut next.ball_masses {
                *m = uniform(rng, lo, hi);
            }
            next.next_resample_time = t + schedule.resample_period;
        }
        PayloadMode::ResampleLoop => {
            if t + TIME_EPS >= next.next_resample_time {
                let [lo, hi] = schedule.resample_ball_range;
                for m in &mut next.ball_masses {
                    *m = uniform(rng, lo, hi);
                }
                while t + TIME_EPS >= next.next_resample_time {
                    next.next_resample_time += schedule.resample_period;
                }
            }
        }
        PayloadMode::Scripted(profile) => {
            let spec = profile.at(t).ok_or(SimError::ProfileExhausted { time: t })?;
            next.tray_mass = spec.tray;
            next.ball_masses = spec.balls;
        }
    }
    next.update_com();
    Ok(next)
}

/// Composite trunk body: mass, CoM offset along the trunk and pitch inertia
/// about that CoM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MassProperties {
    pub mass: f64,
    pub com_x: f64,
    pub inertia: f64,
}

/// Trunk plus payload point masses (tray at the trunk origin, balls at
/// [`TRAY_SLOTS`]), composed with the parallel-axis theorem.
pub fn effective_inertia(model: &RobotModel, payload: &PayloadState) -> MassProperties {
    let points = core::iter::once((model.base_mass, 0.0))
        .chain(core::iter::once((payload.tray_mass, 0.0)))
        .chain(payload.ball_masses.iter().copied().zip(TRAY_SLOTS));
    let (mut mass, mut first, mut second) = (0.0, 0.0, 0.0);
    for (m, x) in points {
        mass += m;
        first += m * x;
        second += m * x * x;
    }
    let com_x = first / mass;
    MassProperties { mass, com_x, inertia: model.base_inertia + second - mass * com_x * com_x }
}
