//! WebSocket transport: one thread per client, the simulation loop on the
//! calling thread.

use std::io::ErrorKind;
use std::net::{SocketAddr, TcpListener, TcpStream};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender, SyncSender, TrySendError};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tungstenite::http::StatusCode;
use tungstenite::{Message, WebSocket};

use super::protocol::{decode_command, encode_frame, Ack, CommandMessage};
use super::session::BridgeSession;
use crate::Error;

pub const WS_PATH: &str = "/ws";

const POLL: Duration = Duration::from_millis(5);
const HANDSHAKE_TIMEOUT: Duration = Duration::from_secs(5);
/// Largest lag the paced clock will try to make up.
const MAX_LAG: Duration = Duration::from_millis(250);

#[derive(Debug, Clone)]
pub struct ServeOptions {
    /// Simulated seconds per wall-clock second; 0 runs unpaced.
    pub realtime_factor: f64,
    /// Wall-clock seconds between frames while paused.
    pub heartbeat: f64,
    /// Frames buffered per client before new ones are dropped for it.
    pub client_queue: usize,
    /// Stop after this many simulated ticks.
    pub max_ticks: Option<u64>,
}

impl Default for ServeOptions {
    fn default() -> Self {
        Self { realtime_factor: 1.0, heartbeat: 1.0, client_queue: 64, max_ticks: None }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ServeSummary {
    pub ticks: u64,
    pub connections: u64,
    pub frames_dropped: u64,
}

pub fn bind(host: &str, port: u16) -> Result<TcpListener, Error> {
    let addr = format!("{host}:{port}");
    TcpListener::bind(&addr).map_err(|source| Error::Bind { addr, source })
}

struct Inbound {
    origin: u64,
    msg: CommandMessage,
}

struct ClientHandle {
    id: u64,
    frames: SyncSender<Arc<str>>,
    replies: Sender<String>,
}

type Registry = Arc<Mutex<Vec<ClientHandle>>>;

fn text(bytes: Vec<u8>) -> String {
    String::from_utf8(bytes).expect("JSON output is UTF-8")
}

fn check_path(req: &Request, resp: Response) -> Result<Response, ErrorResponse> {
    if req.uri().path() == WS_PATH {
        return Ok(resp);
    }
    let mut err = ErrorResponse::new(Some(format!("only {WS_PATH} is served")));
    *err.status_mut() = StatusCode::NOT_FOUND;
    Err(err)
}

fn would_block(e: &tungstenite::Error) -> bool {
    matches!(e, tungstenite::Error::Io(io) if matches!(io.kind(), ErrorKind::WouldBlock | ErrorKind::TimedOut))
}

fn client_loop(
    mut ws: WebSocket<TcpStream>,
    id: u64,
    inbound: Sender<Inbound>,
    frames: Receiver<Arc<str>>,
    replies: Receiver<String>,
    stop: Arc<AtomicBool>,
) {
    let send = |ws: &mut WebSocket<TcpStream>, s: String| ws.send(Message::text(s)).is_ok();
    while !stop.load(Ordering::Relaxed) {
        match ws.read() {
            Ok(Message::Text(t)) => {
                for line in t.as_str().lines().filter(|l| !l.trim().is_empty()) {
                    match decode_command(line.as_bytes()) {
                        Ok(msg) => {
                            if inbound.send(Inbound { origin: id, msg }).is_err() {
                                return;
                            }
                        }
                        Err(e) => {
                            if !send(&mut ws, text(super::protocol::encode_value(&e.reply()))) {
                                return;
                            }
                        }
                    }
                }
            }
            Ok(Message::Close(_)) => break,
            Ok(_) => {}
            Err(e) if would_block(&e) => {}
            Err(_) => return,
        }
        while let Ok(r) = replies.try_recv() {
            if !send(&mut ws, r) {
                return;
            }
        }
        while let Ok(f) = frames.try_recv() {
            if !send(&mut ws, f.to_string()) {
                return;
            }
        }
    }
    let _ = ws.close(None);
    let _ = ws.flush();
}

fn accept_loop(
    listener: TcpListener,
    registry: Registry,
    inbound: Sender<Inbound>,
    queue: usize,
    stop: Arc<AtomicBool>,
    connections: Arc<AtomicU64>,
) {
    if listener.set_nonblocking(true).is_err() {
        return;
    }
    let mut workers = Vec::new();
    while !stop.load(Ordering::Relaxed) {
        let stream = match listener.accept() {
            Ok((s, _)) => s,
            Err(e) if e.kind() == ErrorKind::WouldBlock => {
                thread::sleep(POLL);
                continue;
            }
            Err(_) => continue,
        };
        let (registry, inbound, stop) = (registry.clone(), inbound.clone(), stop.clone());
        let id = connections.fetch_add(1, Ordering::Relaxed);
        workers.push(thread::spawn(move || {
            if stream.set_nonblocking(false).is_err() || stream.set_read_timeout(Some(HANDSHAKE_TIMEOUT)).is_err() {
                return;
            }
            let Ok(ws) = tungstenite::accept_hdr(stream, check_path) else { return };
            if ws.get_ref().set_read_timeout(Some(POLL)).is_err() {
                return;
            }
            let (ftx, frx) = mpsc::sync_channel(queue.max(1));
            let (rtx, rrx) = mpsc::channel();
            registry.lock().expect("registry lock").push(ClientHandle { id, frames: ftx, replies: rtx });
            client_loop(ws, id, inbound, frx, rrx, stop);
            registry.lock().expect("registry lock").retain(|c| c.id != id);
        }));
    }
    for w in workers {
        let _ = w.join();
    }
}

fn route(registry: &Registry, acks: impl IntoIterator<Item = (u64, Ack)>) {
    let clients = registry.lock().expect("registry lock");
    for (origin, ack) in acks {
        if let Some(c) = clients.iter().find(|c| c.id == origin) {
            let _ = c.replies.send(text(super::protocol::encode_value(&serde_json::to_value(&ack).expect("ack"))));
        }
    }
}

fn broadcast(registry: &Registry, line: Arc<str>, dropped: &mut u64) {
    registry.lock().expect("registry lock").retain(|c| match c.frames.try_send(line.clone()) {
        Ok(()) => true,
        Err(TrySendError::Full(_)) => {
            *dropped += 1;
            true
        }
        Err(TrySendError::Disconnected(_)) => false,
    });
}

/// Serves `session` on `listener` until `stop` is set or `max_ticks` is
/// reached.
pub fn serve(
    listener: TcpListener,
    mut session: BridgeSession,
    opts: &ServeOptions,
    stop: Arc<AtomicBool>,
) -> Result<ServeSummary, Error> {
    let registry: Registry = Arc::default();
    let (itx, irx) = mpsc::channel::<Inbound>();
    let connections = Arc::new(AtomicU64::new(0));
    let acceptor = {
        let (registry, stop, connections) = (registry.clone(), stop.clone(), connections.clone());
        let queue = opts.client_queue;
        thread::spawn(move || accept_loop(listener, registry, itx, queue, stop, connections))
    };

    let dt = session.live().env.world.cfg.control_dt();
    let period = (opts.realtime_factor > 0.0).then(|| Duration::from_secs_f64(dt / opts.realtime_factor));
    let heartbeat = Duration::from_secs_f64(opts.heartbeat.max(0.01));
    let mut summary = ServeSummary::default();
    let mut deadline = Instant::now();
    let mut next_heartbeat = Instant::now();

    while !stop.load(Ordering::Relaxed) && opts.max_ticks.is_none_or(|m| summary.ticks < m) {
        while let Ok(i) = irx.try_recv() {
            route(&registry, session.submit(i.origin, i.msg));
        }
        let turn = session.turn();
        route(&registry, turn.acks);
        if turn.record.is_some() {
            summary.ticks += 1;
        }
        if let Some(f) = turn.frame {
            broadcast(&registry, text(encode_frame(&f)).into(), &mut summary.frames_dropped);
        }

        let now = Instant::now();
        if session.is_paused() {
            if now >= next_heartbeat {
                let f = session.heartbeat();
                broadcast(&registry, text(encode_frame(&f)).into(), &mut summary.frames_dropped);
                next_heartbeat = now + heartbeat;
            }
            let wait = next_heartbeat.saturating_duration_since(Instant::now()).min(Duration::from_millis(50));
            match irx.recv_timeout(wait) {
                Ok(i) => route(&registry, session.submit(i.origin, i.msg)),
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => break,
            }
            deadline = Instant::now();
            continue;
        }
        next_heartbeat = now;
        if let Some(p) = period {
            deadline += p;
            match deadline.checked_duration_since(now) {
                Some(wait) => thread::sleep(wait),
                None if now.duration_since(deadline) > MAX_LAG => deadline = now,
                None => {}
            }
        }
    }

    stop.store(true, Ordering::Relaxed);
    let _ = acceptor.join();
    summary.connections = connections.load(Ordering::Relaxed);
    Ok(summary)
}

pub fn local_addr(listener: &TcpListener) -> Result<SocketAddr, Error> {
    listener.local_addr().map_err(|e| Error::io("listener address", e))
}
