//! Reward terms for the nominal and the adaptive policy.
//!
//! Every term is a separate function returning its raw (unweighted) value.
//! Penalties return non-negative raw values and carry negative weights.

use serde::{Deserialize, Serialize};

use crate::kinematics::FootForceEstimate;
use crate::sim::NUM_JOINTS;

pub const NUM_TERMS: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Term {
    LinVelTracking,
    AngVelTracking,
    LinVelZ,
    AngVelXy,
    Orientation,
    JointAcc,
    JointPower,
    BodyHeight,
    FootClearance,
    ActionRate,
    Smoothness,
    GrfTracking,
}

impl Term {
    pub const ALL: [Term; NUM_TERMS] = [
        Term::LinVelTracking,
        Term::AngVelTracking,
        Term::LinVelZ,
        Term::AngVelXy,
        Term::Orientation,
        Term::JointAcc,
        Term::JointPower,
        Term::BodyHeight,
        Term::FootClearance,
        Term::ActionRate,
        Term::Smoothness,
        Term::GrfTracking,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Term::LinVelTracking => "lin_vel_tracking",
            Term::AngVelTracking => "ang_vel_tracking",
            Term::LinVelZ => "lin_vel_z",
            Term::AngVelXy => "ang_vel_xy",
            Term::Orientation => "orientation",
            Term::JointAcc => "joint_acc",
            Term::JointPower => "joint_power",
            Term::BodyHeight => "body_height",
            Term::FootClearance => "foot_clearance",
            Term::ActionRate => "action_rate",
            Term::Smoothness => "smoothness",
            Term::GrfTracking => "grf_tracking",
        }
    }
}

/// One weight per reward term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardWeights {
    pub lin_vel_tracking: f64,
    pub ang_vel_tracking: f64,
    pub lin_vel_z: f64,
    pub ang_vel_xy: f64,
    pub orientation: f64,
    pub joint_acc: f64,
    pub joint_power: f64,
    pub body_height: f64,
    pub foot_clearance: f64,
    pub action_rate: f64,
    pub smoothness: f64,
    pub grf_tracking: f64,
}

impl RewardWeights {
    pub const NOMINAL: Self = Self {
        lin_vel_tracking: 1.0,
        ang_vel_tracking: 0.5,
        lin_vel_z: -2.0,
        ang_vel_xy: -0.05,
        orientation: -0.2,
        joint_acc: -2.5e-7,
        joint_power: -2.0e-5,
        body_height: -2.0,
        foot_clearance: -0.01,
        action_rate: -0.001,
        smoothness: -0.01,
        grf_tracking: 0.0,
    };

    pub const ADAPTIVE: Self = Self {
        lin_vel_tracking: 0.0,
        ang_vel_tracking: 0.0,
        lin_vel_z: -2.0,
        ang_vel_xy: -0.05,
        orientation: -0.2,
        joint_acc: -2.5e-7,
        joint_power: 0.0,
        body_height: -2.0,
        foot_clearance: -0.01,
        action_rate: -0.01,
        smoothness: -0.01,
        grf_tracking: 2.0,
    };

    pub fn as_array(&self) -> [f64; NUM_TERMS] {
        [
            self.lin_vel_tracking,
            self.ang_vel_tracking,
            self.lin_vel_z,
            self.ang_vel_xy,
            self.orientation,
            self.joint_acc,
            self.joint_power,
            self.body_height,
            self.foot_clearance,
            self.action_rate,
            self.smoothness,
            self.grf_tracking,
        ]
    }
}

/// Which force quantity is summed in the GRF tracking reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrfForceMode {
    #[default]
    Magnitude,
    Vertical,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RewardConfig {
    pub nominal: RewardWeights,
    pub adaptive: RewardWeights,
    /// The planar model has no yaw; when enabled the term evaluates at zero error.
    pub ang_vel_tracking_enabled: bool,
    pub grf_force_mode: GrfForceMode,
    /// Denominator of the velocity tracking exponent, (m/s)².
    pub tracking_sigma: f64,
    /// Target swing-foot height above terrain, m.
    pub clearance_height: f64,
    /// Foot speed above which a foot without contact counts as swinging, m/s.
    pub swing_speed: f64,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            nominal: RewardWeights::NOMINAL,
            adaptive: RewardWeights::ADAPTIVE,
            ang_vel_tracking_enabled: false,
            grf_force_mode: GrfForceMode::Magnitude,
            tracking_sigma: 0.25,
            clearance_height: 0.09,
            swing_speed: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FootSignal {
    /// Foot height above the terrain directly below it, m.
    pub height: f64,
    pub vx: f64,
    pub in_contact: bool,
}

/// Everything about one control step that the reward terms read.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepSignals {
    pub vx: f64,
    pub vz: f64,
    pub pitch: f64,
    pub pitch_rate: f64,
    /// Trunk height above local terrain, m.
    pub height: f64,
    pub cmd_vx: f64,
    pub cmd_height: f64,
    pub theta_dot: [f64; NUM_JOINTS],
    /// Finite-difference joint accelerations over the control step, rad/s².
    pub theta_ddot: [f64; NUM_JOINTS],
    pub torques: [f64; NUM_JOINTS],
    pub feet: [FootSignal; 2],
    pub forces: [FootForceEstimate; 2],
    pub robot_mass: f64,
    pub payload_mass: f64,
    pub gravity: f64,
}

/// `current`, `prev`, `prev2` actions of one policy.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ActionHistory {
    pub current: [f64; NUM_JOINTS],
    pub prev: [f64; NUM_JOINTS],
    pub prev2: [f64; NUM_JOINTS],
}

impl ActionHistory {
    pub fn push(&mut self, a: [f64; NUM_JOINTS]) {
        self.prev2 = self.prev;
        self.prev = self.current;
        self.current = a;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub raw: [f64; NUM_TERMS],
    pub weighted: [f64; NUM_TERMS],
    pub total: f64,
}

impl RewardBreakdown {
    pub fn weighted_term(&self, term: Term) -> f64 {
        self.weighted[term as usize]
    }

    pub fn raw_term(&self, term: Term) -> f64 {
        self.raw[term as usize]
    }
}

fn sq(x: f64) -> f64 {
    x * x
}

fn sum_sq(v: impl IntoIterator<Item = f64>) -> f64 {
    v.into_iter().map(sq).sum()
}

pub fn lin_vel_tracking(vx: f64, cmd_vx: f64, sigma: f64) -> f64 {
    libm::exp(-sq(vx - cmd_vx) / sigma)
}

pub fn lin_vel_z(vz: f64) -> f64 {
    sq(vz)
}

pub fn ang_vel_xy(pitch_rate: f64) -> f64 {
    sq(pitch_rate)
}

/// Squared component of the body-frame gravity that is not vertical.
pub fn orientation(pitch: f64) -> f64 {
    sq(libm::sin(pitch))
}

pub fn joint_acc(theta_ddot: &[f64; NUM_JOINTS]) -> f64 {
    sum_sq(theta_ddot.iter().copied())
}

pub fn joint_power(torques: &[f64; NUM_JOINTS], theta_dot: &[f64; NUM_JOINTS]) -> f64 {
    torques.iter().zip(theta_dot).map(|(t, w)| (t * w).abs()).sum()
}

pub fn body_height(h: f64, h_cmd: f64) -> f64 {
    sq(h - h_cmd)
}

pub fn foot_clearance(feet: &[FootSignal; 2], target: f64, swing_speed: f64) -> f64 {
    feet.iter()
        .filter(|f| !f.in_contact && f.vx.abs() > swing_speed)
        .map(|f| sq(f.height - target))
        .sum()
}

pub fn action_rate(a: &ActionHistory) -> f64 {
    sum_sq(a.current.iter().zip(a.prev).map(|(x, y)| x - y))
}

pub fn smoothness(a: &ActionHistory) -> f64 {
    sum_sq((0..NUM_JOINTS).map(|j| a.current[j] - 2.0 * a.prev[j] + a.prev2[j]))
}

/// `0.75·[h > h_cmd] + 0.5·[h < h_cmd]·[Σ|f| > (m_r + m_p) g]`.
pub fn grf_tracking_reward(
    h: f64,
    h_cmd: f64,
    forces: &[FootForceEstimate; 2],
    m_r: f64,
    m_p: f64,
    g: f64,
    mode: GrfForceMode,
) -> f64 {
    if h > h_cmd {
        return 0.75;
    }
    if h < h_cmd {
        let total: f64 = match mode {
            GrfForceMode::Magnitude => forces.iter().map(FootForceEstimate::magnitude).sum(),
            GrfForceMode::Vertical => forces.iter().map(|f| f.f[1].abs()).sum(),
        };
        if total > (m_r + m_p) * g {
            return 0.5;
        }
    }
    0.0
}

fn raw_terms(s: &StepSignals, actions: &ActionHistory, cfg: &RewardConfig) -> [f64; NUM_TERMS] {
    [
        lin_vel_tracking(s.vx, s.cmd_vx, cfg.tracking_sigma),
        if cfg.ang_vel_tracking_enabled { 1.0 } else { 0.0 },
        lin_vel_z(s.vz),
        ang_vel_xy(s.pitch_rate),
        orientation(s.pitch),
        joint_acc(&s.theta_ddot),
        joint_power(&s.torques, &s.theta_dot),
        body_height(s.height, s.cmd_height),
        foot_clearance(&s.feet, cfg.clearance_height, cfg.swing_speed),
        action_rate(actions),
        smoothness(actions),
        grf_tracking_reward(
            s.height,
            s.cmd_height,
            &s.forces,
            s.robot_mass,
            s.payload_mass,
            s.gravity,
            cfg.grf_force_mode,
        ),
    ]
}

pub fn weighted_sum(raw: [f64; NUM_TERMS], weights: &RewardWeights) -> RewardBreakdown {
    let w = weights.as_array();
    let weighted: [f64; NUM_TERMS] = core::array::from_fn(|i| raw[i] * w[i]);
    RewardBreakdown { raw, weighted, total: weighted.iter().sum() }
}

/// Nominal column; the action terms use the nominal action `a`.
pub fn nominal_reward(s: &StepSignals, a: &ActionHistory, cfg: &RewardConfig) -> RewardBreakdown {
    weighted_sum(raw_terms(s, a, cfg), &cfg.nominal)
}

/// Adaptive column; the action terms use the corrective action `Δa`.
pub fn adaptive_reward(s: &StepSignals, delta_a: &ActionHistory, cfg: &RewardConfig) -> RewardBreakdown {
    weighted_sum(raw_terms(s, delta_a, cfg), &cfg.adaptive)
}
