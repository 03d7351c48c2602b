use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{RobotState, World};
use crate::rng::uniform;

/// Episode status after a control step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Running,
    Fallen,
    Timeout,
}

impl Termination {
    pub fn is_done(self) -> bool {
        self != Termination::Running
    }
}

/// Max |pitch| before the episode counts as a fall, rad.
pub const FALL_PITCH: f64 = 1.0;
/// Min trunk height above local terrain before the episode counts as a fall, m.
pub const FALL_HEIGHT: f64 = 0.08;

/// Standing start at `start_x`: joints at the standing pose plus optional
/// ±`joint_noise` uniform perturbation, zero velocities, feet touching the
/// highest terrain point under them.
pub fn reset<R: Rng + ?Sized>(world: &World, start_x: f64, joint_noise: f64, rng: &mut R) -> RobotState {
    let model = &world.model;
    let ground = model
        .hip_offsets
        .iter()
        .map(|hx| world.terrain.height(start_x + hx))
        .fold(world.terrain.height(start_x), f64::max);
    let mut theta = model.theta_stand;
    if joint_noise > 0.0 {
        for q in &mut theta {
            *q += uniform(rng, -joint_noise, joint_noise);
        }
        model.clamp_joints(&mut theta);
    }
    RobotState {
        base_pos: [start_x, ground + model.stand_height()],
        base_pitch: 0.0,
        base_vel: [0.0; 2],
        pitch_rate: 0.0,
        theta,
        theta_dot: [0.0; 4],
        time: 0.0,
    }
}

pub fn check_termination(world: &World, state: &RobotState) -> Termination {
    if state.base_pitch.abs() > FALL_PITCH || world.base_height(state) < FALL_HEIGHT {
        Termination::Fallen
    } else if state.time >= world.cfg.episode_length - 1e-9 {
        Termination::Timeout
    } else {
        Termination::Running
    }
}
