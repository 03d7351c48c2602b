//! Live telemetry bridge: a WebSocket endpoint at `/ws` streaming NDJSON
//! frames and accepting operator commands.
//!
//! Commands are queued and applied at the next control tick; within a tick
//! the last command of each kind wins and earlier ones are acknowledged as
//! superseded. Frames are broadcast to every client, and a client that
//! falls behind loses frames rather than slowing the simulation.

pub mod protocol;
pub mod server;
pub mod session;

pub use protocol::{decode_command, Ack, AckStatus, Command, CommandMessage, TelemetryFrame};
pub use server::{bind, serve, ServeOptions, ServeSummary, WS_PATH};
pub use session::BridgeSession;
