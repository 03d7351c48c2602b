//! The simulation side of the bridge, free of any networking.

use quadload_core::eval::{scenario_env, Controller, EvalError, LiveSession, Scenario, TickRecord};
use quadload_core::obs::{CommandRanges, CommandSource, CommandState};
use quadload_core::rl::{CommandDriver, EnvSettings, PayloadDriver};
use quadload_core::rng::seeded;
use quadload_core::sim::{PayloadState, Termination};
use serde_json::{json, Value};

use super::protocol::{
    Ack, AckStatus, AckTag, BasePose, Command, CommandMessage, FrameTag, Motion, PayloadView, RewardView, Rewards,
    TelemetryFrame,
};

/// Largest mass a single ball may be given, kg.
pub const MAX_BALL_MASS: f64 = 10.0;

#[derive(Debug, Clone)]
struct Pending {
    origin: u64,
    msg: CommandMessage,
}

/// Commands waiting for the next control tick, at most one per queue key;
/// a newer command with the same key replaces the older one.
#[derive(Debug, Clone, Default)]
pub struct CommandQueue {
    items: Vec<Pending>,
}

impl CommandQueue {
    /// Queues `msg` from connection `origin`; returns the command it
    /// replaced, if any, with its origin.
    pub fn push(&mut self, origin: u64, msg: CommandMessage) -> Option<(u64, CommandMessage)> {
        let key = msg.command.queue_key();
        if let Some(slot) = self.items.iter_mut().find(|p| p.msg.command.queue_key() == key) {
            let old = std::mem::replace(slot, Pending { origin, msg });
            return Some((old.origin, old.msg));
        }
        self.items.push(Pending { origin, msg });
        None
    }

    pub fn drain(&mut self) -> Vec<(u64, CommandMessage)> {
        self.items.drain(..).map(|p| (p.origin, p.msg)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Result of one loop turn.
#[derive(Debug, Clone)]
pub struct Turn {
    /// Acknowledgements with the connection each one goes back to.
    pub acks: Vec<(u64, Ack)>,
    /// `None` while paused (see [`BridgeSession::heartbeat`]) or under decimation.
    pub frame: Option<TelemetryFrame>,
    pub record: Option<TickRecord>,
}

#[derive(Debug)]
pub struct BridgeSession {
    live: LiveSession,
    scenario: Scenario,
    ranges: CommandRanges,
    queue: CommandQueue,
    seq: u64,
    ticks: u64,
    decimation: u32,
    paused: bool,
    last: Option<TelemetryFrame>,
    notice: Option<String>,
}

impl BridgeSession {
    /// Starts exactly like a scripted evaluation of `scenario` with `seed`.
    /// Operator commands take over the command or payload channel they touch.
    pub fn new(
        settings: &EnvSettings,
        scenario: Scenario,
        seed: u64,
        controllers: Vec<Controller>,
        active: usize,
        decimation: u32,
    ) -> Result<Self, EvalError> {
        scenario.validate()?;
        let (mut s, opts) = scenario_env(settings, &scenario);
        s.sim.episode_length = f64::INFINITY;
        let ranges = s.commands.clone();
        let live = LiveSession::new(s, opts, seeded(seed), controllers, active)?;
        Ok(Self {
            live,
            scenario,
            ranges,
            queue: CommandQueue::default(),
            seq: 0,
            ticks: 0,
            decimation: decimation.max(1),
            paused: false,
            last: None,
            notice: None,
        })
    }

    pub fn live(&self) -> &LiveSession {
        &self.live
    }

    pub fn is_paused(&self) -> bool {
        self.paused
    }

    /// Queues a command for the next tick boundary. Returns an ack for a
    /// command that was replaced.
    pub fn submit(&mut self, origin: u64, msg: CommandMessage) -> Option<(u64, Ack)> {
        self.queue.push(origin, msg).map(|(o, old)| (o, ack(&old, AckStatus::Superseded, Value::Null, None)))
    }

    pub fn has_pending(&self) -> bool {
        !self.queue.is_empty()
    }

    fn operator_payload(&mut self) -> PayloadState {
        self.live.env.options.payload = PayloadDriver::Operator;
        self.live.env.payload
    }

    fn operator_command(&mut self) -> CommandState {
        self.live.env.options.commands = CommandDriver::Operator;
        let mut c = self.live.env.cmd;
        c.source = CommandSource::Operator;
        c
    }

    fn apply(&mut self, msg: &CommandMessage) -> Ack {
        match &msg.command {
            Command::SetVelocity { vx } => {
                let mut c = self.operator_command();
                c.vx = self.ranges.clamp_vx(*vx);
                self.live.env.set_command(c);
                ack(msg, AckStatus::Applied, json!({ "vx": c.vx }), None)
            }
            Command::SetHeight { h } => {
                let mut c = self.operator_command();
                c.height = self.ranges.clamp_height(*h);
                self.live.env.set_command(c);
                ack(msg, AckStatus::Applied, json!({ "h": c.height }), None)
            }
            Command::AddBall { slot, .. } | Command::RemoveBall { slot } if *slot >= 4 => {
                ack(msg, AckStatus::Rejected, Value::Null, Some(format!("slot {slot} out of range 0..4")))
            }
            Command::AddBall { mass, slot } => {
                let mut p = self.operator_payload();
                let m = if mass.is_finite() { mass.clamp(0.0, MAX_BALL_MASS) } else { 0.0 };
                p.ball_masses[*slot] = m;
                let p = PayloadState::from_spec(&p.spec());
                self.live.env.set_payload(p);
                ack(msg, AckStatus::Applied, json!({ "mass": m, "slot": slot, "total": p.total() }), None)
            }
            Command::RemoveBall { slot } => {
                let mut p = self.operator_payload();
                p.ball_masses[*slot] = 0.0;
                let p = PayloadState::from_spec(&p.spec());
                self.live.env.set_payload(p);
                ack(msg, AckStatus::Applied, json!({ "slot": slot, "total": p.total() }), None)
            }
            Command::ClearPayload => {
                self.operator_payload();
                self.live.env.set_payload(PayloadState::default());
                ack(msg, AckStatus::Applied, json!({ "total": 0.0 }), None)
            }
            Command::SwitchController { label } => match self.live.switch_controller(label) {
                Ok(()) => ack(msg, AckStatus::Applied, json!({ "label": label }), None),
                Err(_) => ack(msg, AckStatus::Rejected, Value::Null, Some(format!("no controller {label:?}"))),
            },
            Command::Pause => {
                self.paused = true;
                ack(msg, AckStatus::Applied, json!({ "paused": true }), None)
            }
            Command::Resume => {
                self.paused = false;
                ack(msg, AckStatus::Applied, json!({ "paused": false }), None)
            }
            Command::Reset { terrain } => {
                let operator_payload = matches!(self.live.env.options.payload, PayloadDriver::Operator);
                match self.live.reset(*terrain) {
                    Ok(()) => {
                        if operator_payload {
                            self.live.env.set_payload(PayloadState::default());
                        }
                        let t = self.live.env.world.terrain;
                        ack(msg, AckStatus::Applied, json!({ "terrain": t }), None)
                    }
                    Err(e) => ack(msg, AckStatus::Rejected, Value::Null, Some(e.to_string())),
                }
            }
        }
    }

    /// Hands scripted channels to the operator once the script has run out.
    fn hand_over_expired(&mut self) {
        let next = self.live.env.state.time + self.live.env.world.cfg.control_dt();
        if next > self.scenario.duration + 1e-9 {
            if let PayloadDriver::Scripted(_) = self.live.env.options.payload {
                self.live.env.options.payload = PayloadDriver::Operator;
            }
        }
    }

    /// Applies queued commands, then steps once unless paused.
    pub fn turn(&mut self) -> Turn {
        let acks: Vec<(u64, Ack)> = self.queue.drain().into_iter().map(|(o, m)| (o, self.apply(&m))).collect();
        if self.paused {
            return Turn { acks, frame: None, record: None };
        }
        self.hand_over_expired();
        let record = match self.live.tick() {
            Ok(rec) => rec,
            Err(e) => {
                self.auto_reset(format!("reset after error: {e}"));
                return Turn { acks, frame: None, record: None };
            }
        };
        self.ticks += 1;
        let frame = self.frame_from(&record);
        if record.step.termination == Termination::Fallen {
            self.auto_reset(format!("reset after fall at t = {:.2} s", record.state.time));
        }
        let frame = (self.ticks % u64::from(self.decimation) == 0 || frame.notice.is_some()).then(|| {
            self.seq += 1;
            let mut f = frame;
            f.seq = self.seq;
            self.last = Some(f.clone());
            f
        });
        Turn { acks, frame, record: Some(record) }
    }

    fn auto_reset(&mut self, why: String) {
        // A reset from a valid configuration cannot fail.
        let _ = self.live.reset(None);
        self.notice = Some(why);
    }

    /// Frame repeating the last state with `paused` set; time does not move.
    pub fn heartbeat(&mut self) -> TelemetryFrame {
        self.seq += 1;
        let mut f = match &self.last {
            Some(f) => f.clone(),
            None => self.initial_frame(),
        };
        f.seq = self.seq;
        f.paused = self.paused;
        f.cmd = Motion { vx: self.live.env.cmd.vx, h: self.live.env.cmd.height };
        f.payload = payload_view(&self.live.env.payload);
        f.controller = self.live.active().label.clone();
        f.notice = self.notice.take();
        self.last = Some(f.clone());
        f
    }

    fn initial_frame(&self) -> TelemetryFrame {
        let env = &self.live.env;
        let s = &env.state;
        let zero = RewardView::from_breakdown(&Default::default());
        let obs = self.live.observation();
        TelemetryFrame {
            kind: FrameTag::Frame,
            seq: 0,
            t: s.time,
            base: BasePose { x: s.base_pos[0], z: s.base_pos[1], pitch: s.base_pitch },
            theta: s.theta,
            feet: env.world.foot_kinematics(s).map(|(p, _)| p),
            contacts: [false; 2],
            grf: [[0.0; 2]; 2],
            grf_est: obs.forces.map(|f| f.f),
            cmd: Motion { vx: env.cmd.vx, h: env.cmd.height },
            actual: Motion { vx: s.base_vel[0], h: env.world.base_height(s) },
            payload: payload_view(&env.payload),
            delta_norm: 0.0,
            rewards: Rewards { nominal: zero.clone(), adaptive: zero },
            controller: self.live.active().label.clone(),
            terrain: env.world.terrain,
            paused: self.paused,
            notice: None,
        }
    }

    fn frame_from(&mut self, r: &TickRecord) -> TelemetryFrame {
        let env = &self.live.env;
        let s = &r.state;
        TelemetryFrame {
            kind: FrameTag::Frame,
            seq: 0,
            t: s.time,
            base: BasePose { x: s.base_pos[0], z: s.base_pos[1], pitch: s.base_pitch },
            theta: s.theta,
            feet: env.world.foot_kinematics(s).map(|(p, _)| p),
            contacts: r.step.contacts.feet.map(|f| f.in_contact),
            grf: r.step.contacts.feet.map(|f| f.grf),
            grf_est: r.forces.map(|f| f.f),
            cmd: Motion { vx: r.cmd.vx, h: r.cmd.height },
            actual: Motion { vx: s.base_vel[0], h: r.step.height },
            payload: payload_view(&r.payload),
            delta_norm: r.delta.iter().map(|d| d * d).sum::<f64>().sqrt(),
            rewards: Rewards {
                nominal: RewardView::from_breakdown(&r.step.nominal),
                adaptive: RewardView::from_breakdown(&r.step.adaptive),
            },
            controller: self.live.controllers()[r.controller].label.clone(),
            terrain: env.world.terrain,
            paused: false,
            notice: self.notice.take(),
        }
    }
}

fn payload_view(p: &PayloadState) -> PayloadView {
    PayloadView { tray: p.tray_mass, balls: p.ball_masses, total: p.total() }
}

fn ack(msg: &CommandMessage, status: AckStatus, applied: Value, reason: Option<String>) -> Ack {
    Ack {
        tag: AckTag::Ack,
        kind: msg.command.kind().to_string(),
        status,
        request_id: msg.request_id.clone(),
        client_id: msg.client_id.clone(),
        applied,
        reason,
    }
}
