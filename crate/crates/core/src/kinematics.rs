//! Leg kinematics, foot-force estimation from joint torques, and PD tracking.
//!
//! Leg angles are measured from straight down in the trunk (hip) frame:
//!
//! ```text
//! x =  l1 sin q1 + l2 sin(q1 + q2)
//! z = -l1 cos q1 - l2 cos(q1 + q2)
//! ```
//!
//! Foot forces are recovered from the torques through `f = (Jᵀ)† τ`, where
//! `f` is the force the leg exerts at the foot. The ground reaction is `-f`.

use nalgebra::{Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::sim::{RobotModel, NUM_JOINTS};

/// Below this |det J| the leg is treated as singular.
pub const SINGULAR_DET: f64 = 1e-6;

/// ∂(foot x, foot z)/∂(hip, knee) in the hip frame, m/rad.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LegJacobian {
    pub matrix: Matrix2<f64>,
    pub singular: bool,
}

impl LegJacobian {
    pub fn from_matrix(matrix: Matrix2<f64>) -> Self {
        Self { matrix, singular: matrix.determinant().abs() < SINGULAR_DET }
    }
}

/// Estimated force at one foot (fx, fz), N.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FootForceEstimate {
    pub f: [f64; 2],
    pub singular: bool,
}

impl FootForceEstimate {
    pub fn magnitude(&self) -> f64 {
        libm::hypot(self.f[0], self.f[1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PdGains {
    pub kp: f64,
    pub kd: f64,
}

impl Default for PdGains {
    fn default() -> Self {
        Self { kp: 20.0, kd: 0.5 }
    }
}

fn leg(theta: &[f64; NUM_JOINTS], leg: usize) -> [f64; 2] {
    [theta[2 * leg], theta[2 * leg + 1]]
}

pub fn foot_position(model: &RobotModel, theta_leg: [f64; 2]) -> [f64; 2] {
    let [l1, l2] = model.link_lengths;
    let [q1, q2] = theta_leg;
    [
        l1 * libm::sin(q1) + l2 * libm::sin(q1 + q2),
        -l1 * libm::cos(q1) - l2 * libm::cos(q1 + q2),
    ]
}

pub fn foot_jacobian(model: &RobotModel, theta_leg: [f64; 2]) -> LegJacobian {
    let [l1, l2] = model.link_lengths;
    let [q1, q2] = theta_leg;
    let (s1, c1) = libm::sincos(q1);
    let (s12, c12) = libm::sincos(q1 + q2);
    LegJacobian::from_matrix(Matrix2::new(
        l1 * c1 + l2 * c12,
        l2 * c12,
        l1 * s1 + l2 * s12,
        l2 * s12,
    ))
}

/// `f = (Jᵀ)† τ`: exact inverse when regular, minimum-norm least squares at
/// singular configurations.
pub fn estimate_foot_force(jacobian: &LegJacobian, tau_leg: [f64; 2]) -> FootForceEstimate {
    let jt = jacobian.matrix.transpose();
    let tau = Vector2::new(tau_leg[0], tau_leg[1]);
    let f = if jacobian.singular {
        jt.svd(true, true).pseudo_inverse(1e-12).map(|p| p * tau).unwrap_or_else(|_| Vector2::zeros())
    } else {
        let det = jt.determinant();
        Vector2::new(jt[(1, 1)] * tau.x - jt[(0, 1)] * tau.y, -jt[(1, 0)] * tau.x + jt[(0, 0)] * tau.y) / det
    };
    FootForceEstimate { f: [f.x, f.y], singular: jacobian.singular }
}

/// Ground reaction on each foot in the world frame, estimated from the joint
/// torques and the configuration at decision time. Front foot first.
pub fn estimate_ground_reactions(
    model: &RobotModel,
    theta: &[f64; NUM_JOINTS],
    pitch: f64,
    torques: &[f64; NUM_JOINTS],
) -> [FootForceEstimate; 2] {
    let (s, c) = libm::sincos(pitch);
    [0, 1].map(|i| {
        let est = estimate_foot_force(&foot_jacobian(model, leg(theta, i)), leg(torques, i));
        let [fx, fz] = est.f;
        FootForceEstimate { f: [-(c * fx - s * fz), -(s * fx + c * fz)], singular: est.singular }
    })
}

/// `clamp(kp (θ_des − θ) − kd θ̇, ±torque_limit)`.
pub fn pd_torque(
    theta_des: &[f64; NUM_JOINTS],
    theta: &[f64; NUM_JOINTS],
    theta_dot: &[f64; NUM_JOINTS],
    gains: PdGains,
    torque_limit: f64,
) -> [f64; NUM_JOINTS] {
    core::array::from_fn(|j| {
        (gains.kp * (theta_des[j] - theta[j]) - gains.kd * theta_dot[j]).clamp(-torque_limit, torque_limit)
    })
}

/// Joint targets `θ_stand + a`, clamped to the joint limits.
pub fn action_to_target(action: &[f64; NUM_JOINTS], model: &RobotModel) -> [f64; NUM_JOINTS] {
    let mut target: [f64; NUM_JOINTS] = core::array::from_fn(|j| model.theta_stand[j] + action[j]);
    model.clamp_joints(&mut target);
    target
}
