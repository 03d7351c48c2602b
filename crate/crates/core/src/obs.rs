//! Policy observations, the force-augmented observation, the history window
//! and velocity/height commands.
//!
//! Layout of the 17-entry observation (the index map is [`OBS_FIELDS`]):
//!
//! | range   | field                         |
//! |---------|-------------------------------|
//! | 0       | pitch rate, rad/s             |
//! | 1..3    | gravity in the body frame     |
//! | 3..5    | command (vx m/s, height m)    |
//! | 5..9    | joint angles, rad             |
//! | 9..13   | joint velocities, rad/s       |
//! | 13..17  | previous applied action, rad  |
//!
//! The augmented observation appends the estimated ground reactions
//! (front fx, fz, rear fx, fz) scaled by `1 / (m_r g)`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::kinematics::FootForceEstimate;
use crate::rng::uniform;
use crate::sim::{RobotState, NUM_JOINTS};

pub const OBS_DIM: usize = 17;
pub const FORCE_DIM: usize = 4;
pub const AUG_DIM: usize = OBS_DIM + FORCE_DIM;
pub const HISTORY_LEN: usize = 5;
pub const HISTORY_DIM: usize = OBS_DIM * HISTORY_LEN;

/// One named slice of an observation vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ObsField {
    pub name: &'static str,
    pub start: usize,
    pub len: usize,
}

const fn field(name: &'static str, start: usize, len: usize) -> ObsField {
    ObsField { name, start, len }
}

pub const OBS_FIELDS: [ObsField; 6] = [
    field("pitch_rate", 0, 1),
    field("gravity", 1, 2),
    field("command", 3, 2),
    field("theta", 5, 4),
    field("theta_dot", 9, 4),
    field("prev_action", 13, 4),
];

pub const AUG_FIELDS: [ObsField; 7] = [
    OBS_FIELDS[0],
    OBS_FIELDS[1],
    OBS_FIELDS[2],
    OBS_FIELDS[3],
    OBS_FIELDS[4],
    OBS_FIELDS[5],
    field("foot_force", 17, 4),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CommandSource {
    Sampled,
    Scripted,
    Operator,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CommandState {
    pub vx: f64,
    pub height: f64,
    pub source: CommandSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommandRanges {
    pub vx: [f64; 2],
    pub height: [f64; 2],
    /// Resampling period for sampled commands, s.
    pub resample_period: f64,
}

impl Default for CommandRanges {
    fn default() -> Self {
        Self { vx: [-1.0, 1.0], height: [0.24, 0.32], resample_period: 5.0 }
    }
}

impl CommandRanges {
    pub fn clamp_vx(&self, vx: f64) -> f64 {
        vx.clamp(self.vx[0], self.vx[1])
    }

    pub fn clamp_height(&self, h: f64) -> f64 {
        h.clamp(self.height[0], self.height[1])
    }

    pub fn midpoint(&self) -> CommandState {
        CommandState {
            vx: 0.5 * (self.vx[0] + self.vx[1]),
            height: 0.5 * (self.height[0] + self.height[1]),
            source: CommandSource::Scripted,
        }
    }
}

pub fn sample_command<R: Rng + ?Sized>(rng: &mut R, ranges: &CommandRanges) -> CommandState {
    CommandState {
        vx: uniform(rng, ranges.vx[0], ranges.vx[1]),
        height: uniform(rng, ranges.height[0], ranges.height[1]),
        source: CommandSource::Sampled,
    }
}

impl CommandState {
    /// Draws a new command only while the source is `Sampled`; scripted and
    /// operator commands are left alone.
    pub fn refresh<R: Rng + ?Sized>(&mut self, rng: &mut R, ranges: &CommandRanges) {
        if self.source == CommandSource::Sampled {
            *self = sample_command(rng, ranges);
        }
    }
}

/// Step profile of commands over time; no interpolation between keys.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommandScript {
    /// `(start_time, vx, height)` with strictly increasing times.
    pub keys: alloc::vec::Vec<(f64, f64, f64)>,
}

impl CommandScript {
    pub fn constant(vx: f64, height: f64) -> Self {
        Self { keys: alloc::vec![(0.0, vx, height)] }
    }

    pub fn at(&self, t: f64) -> Option<CommandState> {
        self.keys
            .iter()
            .rev()
            .find(|(start, _, _)| *start <= t + 1e-9)
            .map(|&(_, vx, height)| CommandState { vx, height, source: CommandSource::Scripted })
    }
}

/// Half-widths of the additive uniform training noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsNoise {
    pub theta: f64,
    pub theta_dot: f64,
    pub gravity: f64,
}

impl Default for ObsNoise {
    fn default() -> Self {
        Self { theta: 0.01, theta_dot: 0.2, gravity: 0.05 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation(pub [f64; OBS_DIM]);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentedObservation(pub [f64; AUG_DIM]);

/// Named view of an observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationParts {
    pub pitch_rate: f64,
    pub gravity: [f64; 2],
    pub command: [f64; 2],
    pub theta: [f64; NUM_JOINTS],
    pub theta_dot: [f64; NUM_JOINTS],
    pub prev_action: [f64; NUM_JOINTS],
}

impl ObservationParts {
    pub fn build(&self) -> Observation {
        let mut o = [0.0; OBS_DIM];
        o[0] = self.pitch_rate;
        o[1..3].copy_from_slice(&self.gravity);
        o[3..5].copy_from_slice(&self.command);
        o[5..9].copy_from_slice(&self.theta);
        o[9..13].copy_from_slice(&self.theta_dot);
        o[13..17].copy_from_slice(&self.prev_action);
        Observation(o)
    }
}

fn take<const N: usize>(v: &[f64], f: ObsField) -> [f64; N] {
    core::array::from_fn(|i| v[f.start + i])
}

impl Observation {
    pub fn parse(&self) -> ObservationParts {
        let v = &self.0;
        ObservationParts {
            pitch_rate: v[0],
            gravity: take(v, OBS_FIELDS[1]),
            command: take(v, OBS_FIELDS[2]),
            theta: take(v, OBS_FIELDS[3]),
            theta_dot: take(v, OBS_FIELDS[4]),
            prev_action: take(v, OBS_FIELDS[5]),
        }
    }
}

/// Gravity direction expressed in the trunk frame.
pub fn projected_gravity(pitch: f64) -> [f64; 2] {
    let (s, c) = libm::sincos(pitch);
    [-s, -c]
}

/// Builds `o_t`. Pass `noise` only during training.
pub fn build_observation<R: Rng + ?Sized>(
    state: &RobotState,
    cmd: &CommandState,
    prev_action: &[f64; NUM_JOINTS],
    noise: Option<(&ObsNoise, &mut R)>,
) -> Observation {
    let mut parts = ObservationParts {
        pitch_rate: state.pitch_rate,
        gravity: projected_gravity(state.base_pitch),
        command: [cmd.vx, cmd.height],
        theta: state.theta,
        theta_dot: state.theta_dot,
        prev_action: *prev_action,
    };
    if let Some((n, rng)) = noise {
        for g in &mut parts.gravity {
            *g += uniform(rng, -n.gravity, n.gravity);
        }
        for q in &mut parts.theta {
            *q += uniform(rng, -n.theta, n.theta);
        }
        for qd in &mut parts.theta_dot {
            *qd += uniform(rng, -n.theta_dot, n.theta_dot);
        }
    }
    parts.build()
}

/// `õ_t = (o_t, f · force_scale)`, front foot first.
pub fn build_augmented(o: &Observation, forces: &[FootForceEstimate; 2], force_scale: f64) -> AugmentedObservation {
    let mut out = [0.0; AUG_DIM];
    out[..OBS_DIM].copy_from_slice(&o.0);
    for (i, f) in forces.iter().enumerate() {
        out[OBS_DIM + 2 * i] = f.f[0] * force_scale;
        out[OBS_DIM + 2 * i + 1] = f.f[1] * force_scale;
    }
    AugmentedObservation(out)
}

/// Fixed affine normalization applied before observations enter a network.
/// Joint angles are taken relative to the standing pose.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureScaler {
    pub theta_stand: [f64; NUM_JOINTS],
    pub height_center: f64,
}

impl FeatureScaler {
    pub const PITCH_RATE: f64 = 0.25;
    pub const THETA_DOT: f64 = 0.05;
    pub const HEIGHT: f64 = 10.0;

    pub fn apply(&self, o: &Observation, out: &mut [f32]) {
        let v = &o.0;
        out[0] = (v[0] * Self::PITCH_RATE) as f32;
        out[1] = v[1] as f32;
        out[2] = v[2] as f32;
        out[3] = v[3] as f32;
        out[4] = ((v[4] - self.height_center) * Self::HEIGHT) as f32;
        for j in 0..NUM_JOINTS {
            out[5 + j] = (v[5 + j] - self.theta_stand[j]) as f32;
            out[9 + j] = (v[9 + j] * Self::THETA_DOT) as f32;
            out[13 + j] = v[13 + j] as f32;
        }
    }

    pub fn features(&self, o: &Observation) -> [f32; OBS_DIM] {
        let mut out = [0.0; OBS_DIM];
        self.apply(o, &mut out);
        out
    }

    pub fn apply_augmented(&self, o: &AugmentedObservation, out: &mut [f32]) {
        let mut base = [0.0; OBS_DIM];
        base.copy_from_slice(&o.0[..OBS_DIM]);
        self.apply(&Observation(base), &mut out[..OBS_DIM]);
        for i in 0..FORCE_DIM {
            out[OBS_DIM + i] = o.0[OBS_DIM + i] as f32;
        }
    }
}

/// The last [`HISTORY_LEN`] frames, oldest first, zero-padded after a reset.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoryWindow<T: Copy + Default, const W: usize> {
    frames: [[T; W]; HISTORY_LEN],
    len: usize,
}

impl<T: Copy + Default, const W: usize> Default for HistoryWindow<T, W> {
    fn default() -> Self {
        Self { frames: [[T::default(); W]; HISTORY_LEN], len: 0 }
    }
}

impl<T: Copy + Default, const W: usize> HistoryWindow<T, W> {
    pub fn clear(&mut self) {
        *self = Self::default();
    }

    pub fn push(&mut self, frame: [T; W]) {
        self.frames.copy_within(1.., 0);
        self.frames[HISTORY_LEN - 1] = frame;
        self.len = (self.len + 1).min(HISTORY_LEN);
    }

    /// Frames pushed since the last reset, capped at the window size.
    pub fn filled(&self) -> usize {
        self.len
    }

    pub fn flatten_into(&self, out: &mut [T]) {
        for (chunk, frame) in out.chunks_exact_mut(W).zip(&self.frames) {
            chunk.copy_from_slice(frame);
        }
    }

    pub fn flatten(&self) -> alloc::vec::Vec<T> {
        let mut out = alloc::vec![T::default(); W * HISTORY_LEN];
        self.flatten_into(&mut out);
        out
    }
}

/// History of raw observations.
pub type ObsHistory = HistoryWindow<f64, OBS_DIM>;

/// `push_history` in functional form.
pub fn push_history(window: &ObsHistory, o: &Observation) -> ObsHistory {
    let mut next = window.clone();
    next.push(o.0);
    next
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use crate::sim::RobotModel;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn rest_state() -> RobotState {
        let m = RobotModel::default();
        RobotState {
            base_pos: [0.0, m.stand_height()],
            base_pitch: 0.0,
            base_vel: [0.0; 2],
            pitch_rate: 0.0,
            theta: m.theta_stand,
            theta_dot: [0.0; 4],
            time: 0.0,
        }
    }

    const CMD: CommandState = CommandState { vx: 0.3, height: 0.28, source: CommandSource::Scripted };

    #[test]
    fn rest_observation() {
        let o = build_observation::<ChaCha8Rng>(&rest_state(), &CMD, &[0.0; 4], None);
        let p = o.parse();
        assert_eq!(p.pitch_rate, 0.0);
        assert_eq!(p.gravity, [-0.0, -1.0]);
        assert_eq!(p.theta, RobotModel::default().theta_stand);
        assert_eq!(p.command, [0.3, 0.28]);
    }

    #[test]
    fn gravity_at_vertical_pitch() {
        let g = projected_gravity(core::f64::consts::FRAC_PI_2);
        // rotating world (0, -1) into a frame pitched by +90°
        assert_abs_diff_eq!(g[0], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(g[1], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn deterministic_without_noise() {
        let s = rest_state();
        let a = build_observation::<ChaCha8Rng>(&s, &CMD, &[0.1; 4], None);
        let b = build_observation::<ChaCha8Rng>(&s, &CMD, &[0.1; 4], None);
        assert_eq!(a, b);
    }

    #[test]
    fn noise_stays_in_band() {
        let s = rest_state();
        let clean = build_observation::<ChaCha8Rng>(&s, &CMD, &[0.0; 4], None).parse();
        let mut rng = seeded(4);
        let noise = ObsNoise::default();
        for _ in 0..200 {
            let n = build_observation(&s, &CMD, &[0.0; 4], Some((&noise, &mut rng))).parse();
            for j in 0..4 {
                assert!((n.theta[j] - clean.theta[j]).abs() <= 0.01);
                assert!((n.theta_dot[j] - clean.theta_dot[j]).abs() <= 0.2);
            }
            assert!((n.gravity[1] - clean.gravity[1]).abs() <= 0.05);
            assert_eq!(n.command, clean.command);
        }
    }

    #[test]
    fn field_table_tiles_the_vector() {
        let mut next = 0;
        for f in AUG_FIELDS {
            assert_eq!(f.start, next, "{}", f.name);
            next += f.len;
        }
        assert_eq!(next, AUG_DIM);
        assert_eq!(OBS_FIELDS.iter().map(|f| f.len).sum::<usize>(), OBS_DIM);
    }

    #[test]
    fn augmented_zero_forces() {
        let o = build_observation::<ChaCha8Rng>(&rest_state(), &CMD, &[0.0; 4], None);
        let aug = build_augmented(&o, &[FootForceEstimate::default(); 2], 1.0);
        assert_eq!(&aug.0[..OBS_DIM], &o.0);
        assert_eq!(&aug.0[OBS_DIM..], &[0.0; 4]);
    }

    #[test]
    fn augmented_force_order() {
        let o = Observation([0.0; OBS_DIM]);
        let f = [
            FootForceEstimate { f: [1.0, 2.0], singular: false },
            FootForceEstimate { f: [3.0, 4.0], singular: false },
        ];
        let aug = build_augmented(&o, &f, 0.5);
        assert_eq!(&aug.0[OBS_DIM..], &[0.5, 1.0, 1.5, 2.0]);
    }

    #[test]
    fn history_padding_and_fifo() {
        let mut h = ObsHistory::default();
        let frame = |k: f64| Observation([k; OBS_DIM]);
        h = push_history(&h, &frame(1.0));
        let flat = h.flatten();
        assert_eq!(flat.len(), HISTORY_DIM);
        assert!(flat[..4 * OBS_DIM].iter().all(|v| *v == 0.0));
        assert!(flat[4 * OBS_DIM..].iter().all(|v| *v == 1.0));
        for k in 2..=6 {
            h = push_history(&h, &frame(f64::from(k)));
        }
        let flat = h.flatten();
        for (i, chunk) in flat.chunks(OBS_DIM).enumerate() {
            assert!(chunk.iter().all(|v| *v == (i + 2) as f64));
        }
        assert_eq!(h.filled(), HISTORY_LEN);
    }

    #[test]
    fn collapsed_ranges_give_point_command() {
        let r = CommandRanges { vx: [0.4, 0.4], height: [0.3, 0.3], ..Default::default() };
        let c = sample_command(&mut seeded(1), &r);
        assert_eq!((c.vx, c.height), (0.4, 0.3));
    }

    #[test]
    fn command_sample_means() {
        let r = CommandRanges::default();
        let mut rng = seeded(21);
        let n = 10_000;
        let (mut sv, mut sh) = (0.0, 0.0);
        for _ in 0..n {
            let c = sample_command(&mut rng, &r);
            assert!((-1.0..=1.0).contains(&c.vx) && (0.24..=0.32).contains(&c.height));
            sv += c.vx;
            sh += c.height;
        }
        let n = f64::from(n);
        let sd_v = 2.0 / libm::sqrt(12.0);
        let sd_h = 0.08 / libm::sqrt(12.0);
        assert!((sv / n).abs() < 3.0 * sd_v / libm::sqrt(n));
        assert!((sh / n - 0.28).abs() < 3.0 * sd_h / libm::sqrt(n));
    }

    #[test]
    fn operator_command_is_not_resampled() {
        let mut c = CommandState { vx: 0.7, height: 0.25, source: CommandSource::Operator };
        c.refresh(&mut seeded(2), &CommandRanges::default());
        assert_eq!((c.vx, c.height), (0.7, 0.25));
        let mut s = CommandState { source: CommandSource::Sampled, ..c };
        s.refresh(&mut seeded(2), &CommandRanges::default());
        assert_ne!(s.vx, 0.7);
    }

    #[test]
    fn scaler_centres_standing_pose() {
        let m = RobotModel::default();
        let sc = FeatureScaler { theta_stand: m.theta_stand, height_center: 0.28 };
        let o = build_observation::<ChaCha8Rng>(&rest_state(), &CMD, &[0.0; 4], None);
        let f = sc.features(&o);
        assert!(f[5..9].iter().all(|v| *v == 0.0));
        assert_abs_diff_eq!(f[4], 0.0, epsilon = 1e-6);
    }

    proptest! {
        #[test]
        fn gravity_has_unit_norm(p in -10.0f64..10.0) {
            let g = projected_gravity(p);
            prop_assert!((libm::hypot(g[0], g[1]) - 1.0).abs() < 1e-15);
        }

        #[test]
        fn parse_build_round_trip(v in proptest::array::uniform17(-5.0f64..5.0)) {
            let o = Observation(v);
            prop_assert_eq!(o.parse().build(), o);
        }

        #[test]
        fn augmented_prefix(v in proptest::array::uniform17(-5.0f64..5.0), f in proptest::array::uniform4(-500.0f64..500.0), s in 0.0f64..1.0) {
            let o = Observation(v);
            let forces = [
                FootForceEstimate { f: [f[0], f[1]], singular: false },
                FootForceEstimate { f: [f[2], f[3]], singular: false },
            ];
            let aug = build_augmented(&o, &forces, s);
            prop_assert_eq!(&aug.0[..OBS_DIM], &o.0[..]);
        }

        #[test]
        fn zero_frames_before_warm_up(k in 0usize..12) {
            let mut h = ObsHistory::default();
            for i in 0..k {
                h.push([1.0 + i as f64; OBS_DIM]);
            }
            let flat = h.flatten();
            let zero_frames = flat.chunks(OBS_DIM).filter(|c| c.iter().all(|v| *v == 0.0)).count();
            prop_assert_eq!(zero_frames, HISTORY_LEN.saturating_sub(k));
        }
    }
}
