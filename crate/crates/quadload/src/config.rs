//! The run configuration: one JSON document holding every tunable.

use std::path::Path;

use quadload_core::kinematics::PdGains;
use quadload_core::obs::{CommandRanges, ObsNoise};
use quadload_core::rewards::RewardConfig;
use quadload_core::rl::{EnvSettings, TerrainCurriculum, TrainConfig};
use quadload_core::sim::{PayloadSchedule, RobotModel, SimConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::Error;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub sim: SimConfig,
    pub model: ModelSection,
    pub obs: ObsSection,
    pub rewards: RewardConfig,
    pub rl: RlSection,
    pub eval: EvalSection,
    pub bridge: BridgeSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub robot: RobotModel,
    /// Per-actuator PD gains.
    pub pd: PdGains,
    pub actuators_per_joint: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        let s = EnvSettings::default();
        Self { robot: s.model, pd: s.pd, actuators_per_joint: s.actuators_per_joint }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObsSection {
    pub noise: ObsNoise,
    pub commands: CommandRanges,
    /// Multiplier on estimated foot forces; `null` uses `1 / (m_r g)`.
    pub force_scale: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RlSection {
    pub train: TrainConfig,
    pub payload: PayloadSchedule,
    pub terrain: TerrainCurriculum,
    pub reset_joint_noise: f64,
}

impl Default for RlSection {
    fn default() -> Self {
        let s = EnvSettings::default();
        Self {
            train: TrainConfig::default(),
            payload: s.payload,
            terrain: s.terrain,
            reset_joint_noise: s.reset_joint_noise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PayloadScaling {
    /// Multiply built-in payloads by robot mass / 12 kg.
    MassRatio,
    /// Use the built-in payloads as written.
    Raw,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub payload_scaling: PayloadScaling,
    /// Seeds used by multi-seed summaries.
    pub seeds: Vec<u64>,
}

impl Default for EvalSection {
    fn default() -> Self {
        Self { payload_scaling: PayloadScaling::MassRatio, seeds: (0..5).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BridgeSection {
    pub host: String,
    /// Built-in scenario the live session starts from.
    pub scenario: String,
    pub seed: u64,
    /// Send every n-th control step.
    pub frame_decimation: u32,
    /// Seconds between frames while paused.
    pub heartbeat: f64,
    /// Per-client outbound frames kept before dropping.
    pub client_queue: usize,
}

impl Default for BridgeSection {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            scenario: "flat_steps".into(),
            seed: 0,
            frame_decimation: 1,
            heartbeat: 1.0,
            client_queue: 64,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, Error> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), Error> {
        self.env_settings().validate().map_err(|e| Error::Config(e.to_string()))?;
        self.rl.train.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.bridge.frame_decimation == 0 {
            return Err(Error::Config("bridge.frame_decimation must be at least 1".into()));
        }
        if !(self.bridge.heartbeat > 0.0) || self.bridge.client_queue == 0 {
            return Err(Error::Config("bridge.heartbeat and bridge.client_queue must be positive".into()));
        }
        if self.eval.seeds.is_empty() {
            return Err(Error::Config("eval.seeds is empty".into()));
        }
        Ok(())
    }

    pub fn env_settings(&self) -> EnvSettings {
        EnvSettings {
            model: self.model.robot.clone(),
            sim: self.sim.clone(),
            pd: self.model.pd,
            rewards: self.rewards.clone(),
            commands: self.obs.commands.clone(),
            noise: self.obs.noise.clone(),
            payload: self.rl.payload.clone(),
            terrain: self.rl.terrain.clone(),
            reset_joint_noise: self.rl.reset_joint_noise,
            force_scale: self.obs.force_scale,
            actuators_per_joint: self.model.actuators_per_joint,
        }
    }

    pub fn payload_scale(&self) -> f64 {
        match self.eval.payload_scaling {
            PayloadScaling::MassRatio => self.model.robot.payload_scale(),
            PayloadScaling::Raw => 1.0,
        }
    }

    /// Canonical JSON with every default filled in.
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// Hex SHA-256 of the compact canonical JSON.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(bytes))
    }
}

/// JSON-Schema (draft 2020-12) of the run configuration, derived from the
/// defaults. A key is listed as required when deleting it from the default
/// document makes parsing fail.
pub fn json_schema() -> serde_json::Value {
    let defaults = serde_json::to_value(RunConfig::default()).expect("config serializes");
    let mut schema = schema_of(&defaults, &defaults, &mut Vec::new());
    let obj = schema.as_object_mut().expect("object schema");
    obj.insert("$schema".into(), "https://json-schema.org/draft/2020-12/schema".into());
    obj.insert("title".into(), "quadload run configuration".into());
    obj.insert("description".into(), "Missing optional keys take the default shown.".into());
    schema
}

fn schema_of(v: &serde_json::Value, root: &serde_json::Value, path: &mut Vec<String>) -> serde_json::Value {
    use serde_json::{json, Map, Value};
    match v {
        Value::Object(m) => {
            let mut props = Map::new();
            let mut required = Vec::new();
            for (k, child) in m {
                path.push(k.clone());
                props.insert(k.clone(), schema_of(child, root, path));
                if !parses_without(root, path) {
                    required.push(Value::String(k.clone()));
                }
                path.pop();
            }
            let mut s = json!({ "type": "object", "additionalProperties": false, "properties": props });
            if !required.is_empty() {
                s["required"] = Value::Array(required);
            }
            s
        }
        Value::Array(items) => {
            let item = items.first().map_or(json!({}), |i| schema_of(i, root, &mut Vec::new()));
            json!({ "type": "array", "items": item, "default": v })
        }
        Value::Number(n) if n.is_f64() => json!({ "type": "number", "default": v }),
        Value::Number(_) => json!({ "type": "integer", "default": v }),
        Value::String(_) => json!({ "type": "string", "default": v }),
        Value::Bool(_) => json!({ "type": "boolean", "default": v }),
        Value::Null => json!({ "default": null }),
    }
}

fn parses_without(root: &serde_json::Value, path: &[String]) -> bool {
    let mut doc = root.clone();
    let (last, parents) = path.split_last().expect("non-empty path");
    let mut cur = &mut doc;
    for p in parents {
        cur = &mut cur[p.as_str()];
    }
    if let Some(m) = cur.as_object_mut() {
        m.remove(last);
    }
    serde_json::from_value::<RunConfig>(doc).is_ok()
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_all_defaults() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.env_settings(), EnvSettings::default());
    }

    #[test]
    fn echo_round_trips() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_json(&cfg.to_json_pretty()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.hash(), cfg.hash());
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::from_json(r#"{"rl": {"train": {"num_envz": 3}}}"#).unwrap_err();
        assert!(err.to_string().contains("num_envz"), "{err}");
        let err = RunConfig::from_json(r#"{"extra": 1}"#).unwrap_err();
        assert!(err.to_string().contains("extra"), "{err}");
    }

    #[test]
    fn hash_tracks_content() {
        let mut cfg = RunConfig::default();
        let h0 = cfg.hash();
        assert_eq!(h0.len(), 64);
        cfg.rl.train.seed = 2;
        assert_ne!(cfg.hash(), h0);
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_json(r#"{"sim": {"dt_physics": -1.0}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"bridge": {"frame_decimation": 0}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"rl": {"train": {"num_envs": 0}}}"#).is_err());
    }

    #[test]
    fn schema_matches_docs() {
        let schema = json_schema();
        assert_eq!(schema["properties"]["bridge"]["properties"]["heartbeat"]["default"], 1.0);
        assert!(schema.get("required").is_none());
        let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../docs/config.schema.json");
        if std::env::var_os("QUADLOAD_BLESS").is_some() {
            std::fs::write(path, serde_json::to_string_pretty(&schema).unwrap() + "\n").unwrap();
        }
        let text = std::fs::read_to_string(path).expect("docs/config.schema.json exists");
        let doc: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert_eq!(doc, schema, "stale; rerun with QUADLOAD_BLESS=1");
    }

    #[test]
    fn payload_scaling_switch() {
        let mut cfg = RunConfig::default();
        assert!((cfg.payload_scale() - (12.0 + 4.0 * 0.3) / 12.0).abs() < 1e-12);
        cfg.eval.payload_scaling = PayloadScaling::Raw;
        assert_eq!(cfg.payload_scale(), 1.0);
    }
}
