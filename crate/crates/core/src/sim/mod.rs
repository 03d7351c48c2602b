//! Sagittal-plane rigid-body quadruped simulator.
//!
//! The robot is a floating base (x, z, pitch) carrying a front and a rear leg,
//! each with a hip and a knee joint. Each planar leg stands for a left/right
//! pair of the real robot. Generalized coordinates are ordered
//! `[x, z, pitch, front_hip, front_knee, rear_hip, rear_knee]`.
//!
//! Angles follow one convention everywhere: a positive rotation turns the
//! +x axis towards +z (nose up for the base). Leg angles are measured from
//! straight down.

mod dynamics;
mod episode;
mod payload;
mod terrain;

pub use dynamics::{mechanical_energy, World};
pub use episode::{check_termination, reset, Termination};
pub use payload::{
    effective_inertia, payload_tick, MassProperties, PayloadMode, PayloadProfile, PayloadSchedule,
    PayloadSpec, PayloadState, TRAY_SLOTS,
};
pub use terrain::{terrain_height, ContactGeometry, TerrainKind, TerrainProfile};

use core::fmt;
use serde::{Deserialize, Serialize};

/// Number of actuated joints.
pub const NUM_JOINTS: usize = 4;
/// Number of generalized coordinates.
pub const NUM_DOF: usize = 7;

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    /// Integration produced NaN or infinite values.
    NonFiniteState { time: f64 },
    InvalidModel(&'static str),
    InvalidConfig(&'static str),
    /// A scripted payload profile has no entry for the requested time.
    ProfileExhausted { time: f64 },
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::NonFiniteState { time } => {
                write!(f, "simulation state became non-finite at t = {time:.4} s")
            }
            SimError::InvalidModel(why) => write!(f, "invalid robot model: {why}"),
            SimError::InvalidConfig(why) => write!(f, "invalid simulation config: {why}"),
            SimError::ProfileExhausted { time } => {
                write!(f, "scripted payload profile ended before t = {time:.4} s")
            }
        }
    }
}

impl core::error::Error for SimError {}

/// Physical description of the planar robot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RobotModel {
    /// Trunk mass without legs, kg.
    pub base_mass: f64,
    /// Trunk pitch inertia about its centre of mass, kg·m².
    pub base_inertia: f64,
    /// Fore/aft offsets of the front and rear hips from the trunk origin, m.
    pub hip_offsets: [f64; 2],
    /// Thigh and shank lengths, m.
    pub link_lengths: [f64; 2],
    /// Thigh and shank masses, kg (per planar leg).
    pub link_masses: [f64; 2],
    /// Reflected rotor inertia added on each joint axis, kg·m².
    pub joint_armature: f64,
    /// `[lower, upper]` per joint, rad, in joint order.
    pub joint_limits: [[f64; 2]; NUM_JOINTS],
    /// Symmetric torque saturation per joint, N·m.
    pub torque_limit: f64,
    /// Standing pose that actions are expressed relative to, rad.
    pub theta_stand: [f64; NUM_JOINTS],
}

impl Default for RobotModel {
    fn default() -> Self {
        Self {
            base_mass: 12.0,
            base_inertia: 0.15,
            hip_offsets: [0.19, -0.19],
            link_lengths: [0.2, 0.2],
            link_masses: [0.3, 0.3],
            joint_armature: 0.01,
            joint_limits: [[-1.2, 2.4], [-2.7, -0.35], [-1.2, 2.4], [-2.7, -0.35]],
            torque_limit: 23.7,
            theta_stand: [0.8, -1.6, 0.8, -1.6],
        }
    }
}

impl RobotModel {
    pub fn validate(&self) -> Result<(), SimError> {
        let masses = [self.base_mass, self.link_masses[0], self.link_masses[1]];
        if masses.iter().any(|m| !(*m > 0.0)) {
            return Err(SimError::InvalidModel("all masses must be positive"));
        }
        if !(self.base_inertia > 0.0) || self.joint_armature < 0.0 {
            return Err(SimError::InvalidModel("inertias must be positive"));
        }
        if self.link_lengths.iter().any(|l| !(*l > 0.0)) {
            return Err(SimError::InvalidModel("link lengths must be positive"));
        }
        if !(self.torque_limit > 0.0) {
            return Err(SimError::InvalidModel("torque limit must be positive"));
        }
        for (lim, stand) in self.joint_limits.iter().zip(self.theta_stand) {
            if !(lim[0] < lim[1]) {
                return Err(SimError::InvalidModel("joint limits must be ordered"));
            }
            if stand < lim[0] || stand > lim[1] {
                return Err(SimError::InvalidModel("standing pose outside joint limits"));
            }
        }
        Ok(())
    }

    /// Trunk plus both legs, kg. This is the robot mass in the GRF reward.
    pub fn robot_mass(&self) -> f64 {
        self.base_mass + 2.0 * (self.link_masses[0] + self.link_masses[1])
    }

    /// Ratio of this robot's mass to a 12 kg reference quadruped. Payload
    /// magnitudes quoted for the reference robot are multiplied by this.
    pub fn payload_scale(&self) -> f64 {
        self.robot_mass() / 12.0
    }

    /// Vertical hip-to-foot distance of the front leg in the standing pose.
    pub fn stand_height(&self) -> f64 {
        let [l1, l2] = self.link_lengths;
        let (q1, q2) = (self.theta_stand[0], self.theta_stand[1]);
        l1 * libm::cos(q1) + l2 * libm::cos(q1 + q2)
    }

    pub fn clamp_joints(&self, theta: &mut [f64; NUM_JOINTS]) {
        for (q, lim) in theta.iter_mut().zip(self.joint_limits) {
            *q = q.clamp(lim[0], lim[1]);
        }
    }
}

/// Full simulator state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    /// Trunk origin (x, z) in the world, m.
    pub base_pos: [f64; 2],
    pub base_pitch: f64,
    /// Trunk origin velocity (vx, vz), m/s.
    pub base_vel: [f64; 2],
    pub pitch_rate: f64,
    pub theta: [f64; NUM_JOINTS],
    pub theta_dot: [f64; NUM_JOINTS],
    /// Seconds since the last reset.
    pub time: f64,
}

impl RobotState {
    pub fn is_finite(&self) -> bool {
        self.base_pos
            .iter()
            .chain(&self.base_vel)
            .chain(&self.theta)
            .chain(&self.theta_dot)
            .chain([&self.base_pitch, &self.pitch_rate, &self.time])
            .all(|v| v.is_finite())
    }

    pub(crate) fn positions(&self) -> [f64; NUM_DOF] {
        let [x, z] = self.base_pos;
        let t = self.theta;
        [x, z, self.base_pitch, t[0], t[1], t[2], t[3]]
    }

    pub(crate) fn velocities(&self) -> [f64; NUM_DOF] {
        let [vx, vz] = self.base_vel;
        let t = self.theta_dot;
        [vx, vz, self.pitch_rate, t[0], t[1], t[2], t[3]]
    }

    pub(crate) fn from_coordinates(q: &[f64; NUM_DOF], v: &[f64; NUM_DOF], time: f64) -> Self {
        Self {
            base_pos: [q[0], q[1]],
            base_pitch: q[2],
            base_vel: [v[0], v[1]],
            pitch_rate: v[2],
            theta: [q[3], q[4], q[5], q[6]],
            theta_dot: [v[3], v[4], v[5], v[6]],
            time,
        }
    }
}

/// Integrator and contact parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub dt_physics: f64,
    /// Physics steps per control step.
    pub control_decimation: u32,
    pub contact_stiffness: f64,
    pub contact_damping: f64,
    pub friction_mu: f64,
    /// Tangential speed below which Coulomb friction is regularized to viscous, m/s.
    pub friction_slip_velocity: f64,
    pub gravity: f64,
    pub contacts_enabled: bool,
    /// Pins the trunk in place; used for hanging-robot tests.
    pub fixed_base: bool,
    /// Episode timeout, s.
    pub episode_length: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            dt_physics: 0.002,
            control_decimation: 10,
            contact_stiffness: 4.0e4,
            contact_damping: 500.0,
            friction_mu: 0.8,
            friction_slip_velocity: 0.01,
            gravity: 9.81,
            contacts_enabled: true,
            fixed_base: false,
            episode_length: 20.0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt_physics > 0.0) {
            return Err(SimError::InvalidConfig("dt_physics must be positive"));
        }
        if self.control_decimation < 1 {
            return Err(SimError::InvalidConfig("control_decimation must be at least 1"));
        }
        if self.contact_stiffness < 0.0 || self.contact_damping < 0.0 {
            return Err(SimError::InvalidConfig("contact stiffness and damping must be >= 0"));
        }
        if self.friction_mu < 0.0 || !(self.friction_slip_velocity > 0.0) {
            return Err(SimError::InvalidConfig("friction parameters out of range"));
        }
        if !(self.episode_length > 0.0) {
            return Err(SimError::InvalidConfig("episode_length must be positive"));
        }
        Ok(())
    }

    pub fn control_dt(&self) -> f64 {
        self.dt_physics * f64::from(self.control_decimation)
    }
}

/// Simulator ground truth for one foot.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FootContact {
    pub in_contact: bool,
    /// Force from the terrain on the foot, world frame (fx, fz), N.
    pub grf: [f64; 2],
    /// Penetration depth along the contact normal, m.
    pub penetration: f64,
}

/// Contact state of both feet, front first.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactReport {
    pub feet: [FootContact; 2],
}

impl ContactReport {
    /// Sum of the two ground reaction forces.
    pub fn net_force(&self) -> [f64; 2] {
        let [a, b] = self.feet;
        [a.grf[0] + b.grf[0], a.grf[1] + b.grf[1]]
    }

    pub fn total_vertical(&self) -> f64 {
        self.feet.iter().map(|f| f.grf[1]).sum()
    }
}
