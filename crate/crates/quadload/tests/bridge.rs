use std::io::ErrorKind;
use std::net::TcpStream;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use quadload::bridge::protocol::encode_command;
use quadload::bridge::{self, AckStatus, BridgeSession, Command, CommandMessage, ServeOptions, TelemetryFrame};
use quadload::RunConfig;
use quadload_core::eval::{builtin_scenario, run_scenario, Controller, EvalOptions, Sample};
use quadload_core::rl::{EnvSettings, Phase, PolicyBundle};
use quadload_core::rng::seeded;
use serde_json::{json, Value};
use tungstenite::{Message, WebSocket};

fn settings() -> EnvSettings {
    RunConfig::default().env_settings()
}

fn controllers() -> Vec<Controller> {
    let spec = RunConfig::default().rl.train.bundle;
    vec![
        Controller { label: "adaptive".into(), bundle: PolicyBundle::new(spec.clone(), Phase::Two, &mut seeded(11)) },
        Controller { label: "baseline".into(), bundle: PolicyBundle::new(spec, Phase::Baseline, &mut seeded(12)) },
    ]
}

fn session() -> BridgeSession {
    let scenario = builtin_scenario("flat_steps", settings().model.payload_scale()).unwrap();
    BridgeSession::new(&settings(), scenario, 3, controllers(), 0, 1).unwrap()
}

fn msg(command: Command, request_id: i64) -> CommandMessage {
    CommandMessage { command, client_id: Some("test".into()), request_id: Some(json!(request_id)) }
}

#[test]
fn uncommanded_session_replays_the_scripted_evaluation() {
    let scenario = builtin_scenario("flat_steps", settings().model.payload_scale()).unwrap();
    let ctrl = controllers();
    let traj = run_scenario(&ctrl[0].bundle, &settings(), &scenario, 3, &EvalOptions::labelled("adaptive")).unwrap();
    assert!(!traj.samples.is_empty());
    let mut s = session();
    for (i, expected) in traj.samples.iter().enumerate() {
        let turn = s.turn();
        let got = Sample::from_tick(turn.record.as_ref().unwrap());
        assert_eq!(&got, expected, "diverged at step {i}");
        assert!(turn.frame.unwrap().is_finite());
    }
}

#[test]
fn velocity_is_clamped_and_acknowledged() {
    let mut s = session();
    assert!(s.submit(1, msg(Command::SetVelocity { vx: 99.0 }, 7)).is_none());
    let turn = s.turn();
    let (origin, ack) = &turn.acks[0];
    assert_eq!(*origin, 1);
    assert_eq!(ack.status, AckStatus::Applied);
    assert_eq!(ack.applied, json!({ "vx": 1.0 }));
    assert_eq!(ack.request_id, Some(json!(7)));
    assert_eq!(turn.frame.unwrap().cmd.vx, 1.0);
}

#[test]
fn last_writer_wins_within_a_tick() {
    let mut s = session();
    assert!(s.submit(1, msg(Command::SetHeight { h: 0.25 }, 1)).is_none());
    let (origin, superseded) = s.submit(2, msg(Command::SetHeight { h: 0.30 }, 2)).unwrap();
    assert_eq!((origin, superseded.status, superseded.request_id), (1, AckStatus::Superseded, Some(json!(1))));
    // different ball slots do not collide
    assert!(s.submit(1, msg(Command::AddBall { mass: 1.0, slot: 0 }, 3)).is_none());
    assert!(s.submit(1, msg(Command::AddBall { mass: 1.0, slot: 2 }, 4)).is_none());
    let turn = s.turn();
    assert_eq!(turn.acks.len(), 3);
    assert!(turn.acks.iter().all(|(_, a)| a.status == AckStatus::Applied));
    assert_eq!(turn.frame.unwrap().cmd.h, 0.30);
}

#[test]
fn added_ball_shows_in_the_next_frame_and_stops_resampling() {
    let mut s = session();
    let before = s.turn().frame.unwrap().payload.total;
    s.submit(1, msg(Command::AddBall { mass: 2.0, slot: 1 }, 1));
    let turn = s.turn();
    assert_eq!(turn.acks[0].1.status, AckStatus::Applied);
    let after = turn.frame.unwrap().payload;
    assert!((after.total - before - 2.0).abs() < 1e-12);
    assert_eq!(after.balls[1], 2.0);
    // the script would change the load at 5 s; the operator payload holds
    for _ in 0..300 {
        if let Some(f) = s.turn().frame {
            assert_eq!(f.payload, after);
        }
    }
}

#[test]
fn bad_slot_and_unknown_controller_are_rejected() {
    let mut s = session();
    s.submit(1, msg(Command::AddBall { mass: 1.0, slot: 4 }, 1));
    s.submit(1, msg(Command::SwitchController { label: "nope".into() }, 2));
    let turn = s.turn();
    assert!(turn.acks.iter().all(|(_, a)| a.status == AckStatus::Rejected && a.reason.is_some()));
    assert_eq!(turn.frame.unwrap().controller, "adaptive");
}

#[test]
fn controller_switch_keeps_the_state() {
    let mut s = session();
    let mut last = None;
    for _ in 0..20 {
        last = s.turn().frame;
    }
    let last = last.unwrap();
    let t_before = s.live().env.state.time;
    s.submit(1, msg(Command::SwitchController { label: "baseline".into() }, 1));
    let turn = s.turn();
    let rec = turn.record.unwrap();
    assert_eq!(rec.t, t_before);
    assert_eq!(rec.controller, 1);
    assert_eq!(rec.delta, [0.0; 4]);
    let f = turn.frame.unwrap();
    assert_eq!(f.controller, "baseline");
    assert_eq!(f.seq, last.seq + 1);
    assert!((f.base.x - last.base.x).abs() < 0.05);
}

#[test]
fn pause_freezes_time_and_heartbeats() {
    let mut s = session();
    s.turn();
    s.turn();
    let t = s.live().env.state.time;
    s.submit(1, msg(Command::Pause, 1));
    let turn = s.turn();
    assert!(turn.frame.is_none() && turn.record.is_none());
    assert!(s.is_paused());
    let a = s.heartbeat();
    let b = s.heartbeat();
    assert!(a.paused && b.paused);
    assert_eq!((a.t, b.t), (t, t));
    assert_eq!(b.seq, a.seq + 1);
    s.submit(1, msg(Command::Resume, 2));
    let f = s.turn().frame.unwrap();
    assert!(!f.paused);
    assert!(f.t > t);
}

#[test]
fn reset_swaps_terrain() {
    let mut s = session();
    for _ in 0..10 {
        s.turn();
    }
    let stairs = quadload_core::sim::TerrainProfile::stairs(0.05, 0.3, 0.5);
    s.submit(1, msg(Command::Reset { terrain: Some(stairs) }, 1));
    let turn = s.turn();
    assert_eq!(turn.acks[0].1.status, AckStatus::Applied);
    let rec = turn.record.unwrap();
    assert_eq!(rec.t, 0.0);
    assert_eq!(turn.frame.unwrap().terrain, stairs);
}

// --- over the socket ---

type Client = WebSocket<TcpStream>;

fn connect(addr: std::net::SocketAddr, path: &str) -> Result<Client, tungstenite::Error> {
    let stream = TcpStream::connect(addr).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(10))).unwrap();
    tungstenite::client(format!("ws://{addr}{path}"), stream).map(|(ws, _)| ws).map_err(|e| match e {
        tungstenite::HandshakeError::Failure(e) => e,
        tungstenite::HandshakeError::Interrupted(_) => panic!("handshake interrupted"),
    })
}

fn next_json(ws: &mut Client) -> Value {
    loop {
        match ws.read() {
            Ok(Message::Text(t)) => return serde_json::from_str(t.as_str()).unwrap(),
            Ok(_) => continue,
            Err(tungstenite::Error::Io(e)) if e.kind() == ErrorKind::WouldBlock => panic!("timed out"),
            Err(e) => panic!("{e}"),
        }
    }
}

fn wait_for(ws: &mut Client, what: &str, mut pred: impl FnMut(&Value) -> bool) -> Value {
    let deadline = Instant::now() + Duration::from_secs(20);
    while Instant::now() < deadline {
        let v = next_json(ws);
        if pred(&v) {
            return v;
        }
    }
    panic!("no message matching {what}");
}

fn send(ws: &mut Client, m: &CommandMessage) {
    ws.send(Message::text(String::from_utf8(encode_command(m)).unwrap())).unwrap();
}

#[test]
fn scripted_client_over_websocket() {
    let listener = bridge::bind("127.0.0.1", 0).unwrap();
    let addr = listener.local_addr().unwrap();
    let stop = Arc::new(AtomicBool::new(false));
    let opts = ServeOptions { realtime_factor: 4.0, heartbeat: 0.1, client_queue: 16, max_ticks: None };
    let server = {
        let stop = stop.clone();
        thread::spawn(move || bridge::serve(listener, session(), &opts, stop))
    };

    assert!(connect(addr, "/elsewhere").is_err());
    let mut ws = connect(addr, bridge::WS_PATH).unwrap();
    let first = wait_for(&mut ws, "frame", |v| v["type"] == "frame");
    let frame: TelemetryFrame = serde_json::from_value(first).unwrap();
    assert!(frame.is_finite());

    send(&mut ws, &msg(Command::SetVelocity { vx: 99.0 }, 5));
    let ack = wait_for(&mut ws, "ack", |v| v["type"] == "ack");
    assert_eq!(ack["status"], "applied");
    assert_eq!(ack["applied"]["vx"], 1.0);
    assert_eq!(ack["request_id"], 5);
    wait_for(&mut ws, "frame with clamped command", |v| v["type"] == "frame" && v["cmd"]["vx"] == 1.0);

    ws.send(Message::text("{\"kind\": \"jump\", \"request_id\": \"x\"}\n")).unwrap();
    let err = wait_for(&mut ws, "error", |v| v["type"] == "error");
    assert_eq!(err, json!({ "type": "error", "error": "unknown_kind", "kind": "jump", "request_id": "x" }));
    ws.send(Message::text("{\"kind\": ")).unwrap();
    let err = wait_for(&mut ws, "error", |v| v["type"] == "error");
    assert_eq!(err["error"], "malformed");

    send(&mut ws, &msg(Command::Pause, 6));
    wait_for(&mut ws, "pause ack", |v| v["type"] == "ack" && v["kind"] == "pause");
    let a = wait_for(&mut ws, "heartbeat", |v| v["type"] == "frame" && v["paused"] == true);
    let b = wait_for(&mut ws, "heartbeat", |v| v["type"] == "frame");
    assert_eq!(b["paused"], true);
    assert_eq!(a["t"], b["t"]);

    stop.store(true, Ordering::Relaxed);
    let summary = server.join().unwrap().unwrap();
    assert!(summary.ticks > 0);
    assert!(summary.connections >= 2);
}

#[test]
fn occupied_port_is_a_bind_error() {
    let held = bridge::bind("127.0.0.1", 0).unwrap();
    let port = held.local_addr().unwrap().port();
    let err = bridge::bind("127.0.0.1", port).unwrap_err();
    assert_eq!(err.exit_code(), quadload::exit::BIND);
}
