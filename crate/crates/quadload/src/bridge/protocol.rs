//! Newline-delimited JSON messages exchanged with live clients.
//!
//! Server to client: telemetry frames (`"type": "frame"`), acknowledgements
//! (`"type": "ack"`) and error replies (`"type": "error"`). Client to server:
//! command objects selected by `"kind"`.

use std::collections::BTreeMap;

use quadload_core::rewards::{RewardBreakdown, Term};
use quadload_core::sim::TerrainProfile;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasePose {
    pub x: f64,
    pub z: f64,
    pub pitch: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Motion {
    pub vx: f64,
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayloadView {
    pub tray: f64,
    pub balls: [f64; 4],
    pub total: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardView {
    pub total: f64,
    /// Weighted value per term name.
    pub terms: BTreeMap<String, f64>,
}

impl RewardView {
    pub fn from_breakdown(r: &RewardBreakdown) -> Self {
        Self { total: r.total, terms: Term::ALL.iter().map(|t| (t.name().to_string(), r.weighted_term(*t))).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rewards {
    pub nominal: RewardView,
    pub adaptive: RewardView,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetryFrame {
    #[serde(rename = "type")]
    pub kind: FrameTag,
    pub seq: u64,
    pub t: f64,
    pub base: BasePose,
    pub theta: [f64; 4],
    /// World (x, z) of the front and rear foot, m.
    pub feet: [[f64; 2]; 2],
    pub contacts: [bool; 2],
    /// True ground reactions, world frame, N.
    pub grf: [[f64; 2]; 2],
    /// Torque-based estimates, world frame, N.
    pub grf_est: [[f64; 2]; 2],
    pub cmd: Motion,
    pub actual: Motion,
    pub payload: PayloadView,
    pub delta_norm: f64,
    pub rewards: Rewards,
    pub controller: String,
    pub terrain: TerrainProfile,
    pub paused: bool,
    /// Set on frames that follow an automatic reset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub notice: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrameTag {
    Frame,
}

impl TelemetryFrame {
    pub fn is_finite(&self) -> bool {
        let mut nums = [self.t, self.base.x, self.base.z, self.base.pitch, self.cmd.vx, self.cmd.h, self.actual.vx]
            .into_iter()
            .chain([self.actual.h, self.delta_norm, self.payload.total, self.rewards.nominal.total])
            .chain([self.rewards.adaptive.total])
            .chain(self.theta)
            .chain(self.feet.into_iter().flatten())
            .chain(self.grf.into_iter().flatten())
            .chain(self.grf_est.into_iter().flatten());
        nums.all(f64::is_finite)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Command {
    SetVelocity { vx: f64 },
    SetHeight { h: f64 },
    AddBall { mass: f64, slot: usize },
    RemoveBall { slot: usize },
    ClearPayload,
    SwitchController { label: String },
    Pause,
    Resume,
    Reset {
        #[serde(default)]
        terrain: Option<TerrainProfile>,
    },
}

pub const COMMAND_KINDS: [&str; 9] = [
    "set_velocity",
    "set_height",
    "add_ball",
    "remove_ball",
    "clear_payload",
    "switch_controller",
    "pause",
    "resume",
    "reset",
];

impl Command {
    pub fn kind(&self) -> &'static str {
        match self {
            Command::SetVelocity { .. } => "set_velocity",
            Command::SetHeight { .. } => "set_height",
            Command::AddBall { .. } => "add_ball",
            Command::RemoveBall { .. } => "remove_ball",
            Command::ClearPayload => "clear_payload",
            Command::SwitchController { .. } => "switch_controller",
            Command::Pause => "pause",
            Command::Resume => "resume",
            Command::Reset { .. } => "reset",
        }
    }

    /// Queue key: one pending command per key and tick. Ball commands are
    /// keyed by slot so different slots do not overwrite each other.
    pub fn queue_key(&self) -> (&'static str, Option<usize>) {
        match self {
            Command::AddBall { slot, .. } | Command::RemoveBall { slot } => ("ball", Some(*slot)),
            Command::ClearPayload => ("ball", None),
            Command::Pause | Command::Resume => ("pause", None),
            other => (other.kind(), None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandMessage {
    #[serde(flatten)]
    pub command: Command,
    #[serde(default)]
    pub client_id: Option<String>,
    #[serde(default)]
    pub request_id: Option<Value>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DecodeError {
    /// Not a JSON object; `offset` is the byte where parsing failed.
    Malformed { offset: usize, message: String },
    UnknownKind { kind: Option<String>, request_id: Option<Value> },
    InvalidField { message: String, request_id: Option<Value> },
}

impl DecodeError {
    pub fn reply(&self) -> Value {
        let mut m = Map::new();
        m.insert("type".into(), "error".into());
        match self {
            DecodeError::Malformed { offset, message } => {
                m.insert("error".into(), "malformed".into());
                m.insert("offset".into(), (*offset).into());
                m.insert("message".into(), message.clone().into());
                m.insert("request_id".into(), Value::Null);
            }
            DecodeError::UnknownKind { kind, request_id } => {
                m.insert("error".into(), "unknown_kind".into());
                m.insert("kind".into(), kind.clone().map_or(Value::Null, Value::String));
                m.insert("request_id".into(), request_id.clone().unwrap_or(Value::Null));
            }
            DecodeError::InvalidField { message, request_id } => {
                m.insert("error".into(), "invalid_field".into());
                m.insert("message".into(), message.clone().into());
                m.insert("request_id".into(), request_id.clone().unwrap_or(Value::Null));
            }
        }
        Value::Object(m)
    }
}

/// Byte offset of a 1-based (line, column) position.
fn byte_offset(bytes: &[u8], line: usize, column: usize) -> usize {
    let mut offset = 0;
    for _ in 1..line {
        match bytes[offset..].iter().position(|b| *b == b'\n') {
            Some(p) => offset += p + 1,
            None => return bytes.len(),
        }
    }
    (offset + column.saturating_sub(1)).min(bytes.len())
}

pub fn decode_command(bytes: &[u8]) -> Result<CommandMessage, DecodeError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|e| DecodeError::Malformed {
        offset: byte_offset(bytes, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let Value::Object(obj) = &value else {
        return Err(DecodeError::Malformed { offset: 0, message: "expected a JSON object".into() });
    };
    let request_id = obj.get("request_id").cloned();
    let kind = obj.get("kind").and_then(Value::as_str);
    if !kind.is_some_and(|k| COMMAND_KINDS.contains(&k)) {
        return Err(DecodeError::UnknownKind { kind: kind.map(str::to_string), request_id });
    }
    serde_json::from_value(value.clone()).map_err(|e| DecodeError::InvalidField { message: e.to_string(), request_id })
}

pub fn encode_frame(frame: &TelemetryFrame) -> Vec<u8> {
    let mut out = serde_json::to_vec(frame).expect("frames serialize");
    out.push(b'\n');
    out
}

pub fn decode_frame(bytes: &[u8]) -> Result<TelemetryFrame, serde_json::Error> {
    serde_json::from_slice(bytes)
}

pub fn encode_command(msg: &CommandMessage) -> Vec<u8> {
    let mut out = serde_json::to_vec(msg).expect("commands serialize");
    out.push(b'\n');
    out
}

/// Whether a command took effect or was replaced by a later one of the same key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckStatus {
    Applied,
    Superseded,
    Rejected,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ack {
    #[serde(rename = "type")]
    pub tag: AckTag,
    pub kind: String,
    pub status: AckStatus,
    pub request_id: Option<Value>,
    pub client_id: Option<String>,
    /// The values actually applied, after clamping.
    pub applied: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AckTag {
    Ack,
}

pub fn encode_value(v: &Value) -> Vec<u8> {
    let mut out = serde_json::to_vec(v).expect("values serialize");
    out.push(b'\n');
    out
}

/// JSON-Schema documents for every message on the wire.
pub fn json_schemas() -> Value {
    use serde_json::json;
    let num = json!({ "type": "number" });
    let vec2 = json!({ "type": "array", "items": num, "minItems": 2, "maxItems": 2 });
    let pair = json!({ "type": "array", "items": vec2, "minItems": 2, "maxItems": 2 });
    let motion = strict(json!({ "vx": num, "h": num }), &["vx", "h"]);
    let reward = strict(
        json!({ "total": num, "terms": { "type": "object", "additionalProperties": num } }),
        &["total", "terms"],
    );
    let terrain = strict(
        json!({
            "kind": { "enum": ["flat", "slope", "stairs"] },
            "slope_angle": num, "step_rise": num, "step_run": num, "origin_x": num
        }),
        &["kind", "slope_angle", "step_rise", "step_run", "origin_x"],
    );
    let frame_props = json!({
        "type": { "const": "frame" },
        "seq": { "type": "integer", "minimum": 0 },
        "t": num,
        "base": strict(json!({ "x": num, "z": num, "pitch": num }), &["x", "z", "pitch"]),
        "theta": { "type": "array", "items": num, "minItems": 4, "maxItems": 4 },
        "feet": pair, "contacts": { "type": "array", "items": { "type": "boolean" }, "minItems": 2, "maxItems": 2 },
        "grf": pair, "grf_est": pair,
        "cmd": motion, "actual": motion,
        "payload": strict(
            json!({ "tray": num, "balls": { "type": "array", "items": num, "minItems": 4, "maxItems": 4 }, "total": num }),
            &["tray", "balls", "total"],
        ),
        "delta_norm": num,
        "rewards": strict(json!({ "nominal": reward, "adaptive": reward }), &["nominal", "adaptive"]),
        "controller": { "type": "string" },
        "terrain": terrain,
        "paused": { "type": "boolean" },
        "notice": { "type": "string" }
    });
    let frame_required: Vec<&str> =
        frame_props.as_object().unwrap().keys().map(String::as_str).filter(|k| *k != "notice").collect();
    let frame = strict(frame_props.clone(), &frame_required);

    let common = json!({ "client_id": { "type": ["string", "null"] }, "request_id": {} });
    let variant = |kind: &str, fields: Value, required: &[&str]| {
        let mut props = common.as_object().unwrap().clone();
        props.insert("kind".into(), json!({ "const": kind }));
        props.extend(fields.as_object().unwrap().clone());
        let mut req = vec!["kind"];
        req.extend_from_slice(required);
        json!({ "type": "object", "properties": props, "required": req })
    };
    let slot = json!({ "type": "integer", "minimum": 0, "maximum": 3 });
    let command = json!({ "oneOf": [
        variant("set_velocity", json!({ "vx": num }), &["vx"]),
        variant("set_height", json!({ "h": num }), &["h"]),
        variant("add_ball", json!({ "mass": num, "slot": slot }), &["mass", "slot"]),
        variant("remove_ball", json!({ "slot": slot }), &["slot"]),
        variant("clear_payload", json!({}), &[]),
        variant("switch_controller", json!({ "label": { "type": "string" } }), &["label"]),
        variant("pause", json!({}), &[]),
        variant("resume", json!({}), &[]),
        variant("reset", json!({ "terrain": { "oneOf": [terrain, { "type": "null" }] } }), &[]),
    ]});
    let ack = strict(
        json!({
            "type": { "const": "ack" },
            "kind": { "enum": COMMAND_KINDS },
            "status": { "enum": ["applied", "superseded", "rejected"] },
            "request_id": {},
            "client_id": { "type": ["string", "null"] },
            "applied": {},
            "reason": { "type": "string" }
        }),
        &["type", "kind", "status", "request_id", "client_id", "applied"],
    );
    let error = json!({
        "type": "object",
        "properties": {
            "type": { "const": "error" },
            "error": { "enum": ["malformed", "unknown_kind", "invalid_field"] },
            "offset": { "type": "integer" },
            "kind": { "type": ["string", "null"] },
            "message": { "type": "string" },
            "request_id": {}
        },
        "required": ["type", "error", "request_id"]
    });
    json!({
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "quadload bridge messages",
        "$defs": { "TelemetryFrame": frame, "CommandMessage": command, "Ack": ack, "ErrorReply": error }
    })
}

fn strict(props: Value, required: &[&str]) -> Value {
    serde_json::json!({ "type": "object", "additionalProperties": false, "properties": props, "required": required })
}
