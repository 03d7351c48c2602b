//! Evaluation runs and their files.
//!
//! Per controller label `L` an evaluation writes `L_timeseries.csv`,
//! `L_summary.json`, `L_plot.json` and `L_trajectory.json`; a comparison adds
//! `comparison.json` and `comparison.csv`. Layouts are described in
//! `docs/eval-output.md`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use quadload_core::eval::{
    builtin_scenario, compare, mean, metrics_from_trajectory, run_scenario, Comparison, EvalOptions, MetricsTimeseries,
    Scenario, Stat, Trajectory, BUILTIN_NAMES,
};
use quadload_core::rl::Phase;
use serde::Serialize;
use serde_json::json;

use crate::checkpoint::Checkpoint;
use crate::train::provenance;
use crate::Error;

pub const TIMESERIES_SCHEMA: &str = "quadload.timeseries/1";
pub const SUMMARY_SCHEMA: &str = "quadload.summary/1";
pub const COMPARISON_SCHEMA: &str = "quadload.comparison/1";

pub const TIMESERIES_COLUMNS: [&str; 14] = [
    "step",
    "t",
    "phase",
    "payload",
    "h",
    "h_cmd",
    "h_err",
    "vx",
    "vx_cmd",
    "vx_err",
    "torque_effort",
    "delta_norm",
    "grf_norm",
    "fall",
];

/// A built-in scenario name, or a path to a scenario JSON file.
pub fn load_scenario(spec: &str, scale: f64) -> Result<Scenario, Error> {
    let path = Path::new(spec);
    let scenario = if BUILTIN_NAMES.contains(&spec) || !path.exists() {
        builtin_scenario(spec, scale).map_err(|e| Error::Scenario(e.to_string()))?
    } else {
        let text = fs::read_to_string(path).map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Scenario(format!("{}: {e}", path.display())))?
    };
    scenario.validate().map_err(|e| Error::Scenario(e.to_string()))?;
    Ok(scenario)
}

pub fn default_label(phase: Phase) -> &'static str {
    match phase {
        Phase::Baseline => "baseline",
        Phase::One | Phase::Two => "adaptive",
    }
}

pub fn timeseries_csv(m: &MetricsTimeseries, config_hash: &str) -> String {
    let mut out = provenance(
        config_hash,
        m.seed,
        &[
            ("schema", TIMESERIES_SCHEMA.to_string()),
            ("scenario", m.scenario.clone()),
            ("controller", m.controller.clone()),
        ],
    );
    out.push_str(&TIMESERIES_COLUMNS.join(","));
    out.push('\n');
    let c = &m.columns;
    let fall_step = m.falls.first().map(|f| f.step);
    for k in 0..c.len() {
        let _ = writeln!(
            out,
            "{k},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            c.t[k],
            c.phase[k],
            c.payload[k],
            c.height[k],
            c.cmd_height[k],
            c.height_error[k],
            c.vx[k],
            c.cmd_vx[k],
            c.vx_error[k],
            c.torque_effort[k],
            c.delta_norm[k],
            c.grf_norm[k],
            u8::from(fall_step == Some(k)),
        );
    }
    out
}

pub fn summary_json(m: &MetricsTimeseries, config_hash: &str) -> serde_json::Value {
    let c = &m.columns;
    json!({
        "schema": SUMMARY_SCHEMA,
        "scenario": m.scenario,
        "controller": m.controller,
        "seed": m.seed,
        "config_hash": config_hash,
        "steps": c.len(),
        "falls": m.falls,
        "overall": {
            "height_error": Stat::of(&c.height_error),
            "vx_error": Stat::of(&c.vx_error),
            "torque_effort": Stat::of(&c.torque_effort),
            "delta_norm": Stat::of(&c.delta_norm),
            "grf_norm": Stat::of(&c.grf_norm),
        },
        "phases": m.phases,
    })
}

/// The series needed to redraw tracking, payload, force and correction plots.
pub fn plot_json(m: &MetricsTimeseries, config_hash: &str) -> serde_json::Value {
    let c = &m.columns;
    json!({
        "scenario": m.scenario,
        "controller": m.controller,
        "seed": m.seed,
        "config_hash": config_hash,
        "t": c.t,
        "h": c.height,
        "h_cmd": c.cmd_height,
        "vx": c.vx,
        "vx_cmd": c.cmd_vx,
        "payload": c.payload,
        "torque_effort": c.torque_effort,
        "delta_norm": c.delta_norm,
        "grf_norm": c.grf_norm,
        "phase_starts": m.phases.iter().map(|p| p.start).collect::<Vec<_>>(),
        "falls": m.falls.iter().map(|f| f.t).collect::<Vec<_>>(),
    })
}

pub fn comparison_json(c: &Comparison, config_hash_a: &str, config_hash_b: &str) -> serde_json::Value {
    json!({
        "schema": COMPARISON_SCHEMA,
        "config_hash_a": config_hash_a,
        "config_hash_b": config_hash_b,
        "report": c,
    })
}

pub fn comparison_csv(c: &Comparison, config_hash: &str) -> String {
    let mut out = provenance(
        config_hash,
        c.seed,
        &[
            ("schema", COMPARISON_SCHEMA.to_string()),
            ("scenario", c.scenario.clone()),
            ("controller_a", c.controller_a.clone()),
            ("controller_b", c.controller_b.clone()),
            ("falls_a", c.falls_a.len().to_string()),
            ("falls_b", c.falls_b.len().to_string()),
        ],
    );
    out.push_str("phase,delta_height_error,delta_vx_error,delta_torque_effort\n");
    for d in &c.phases {
        let _ = writeln!(out, "{},{},{},{}", d.phase, d.height_error, d.vx_error, d.torque_effort);
    }
    let o = &c.overall;
    let _ = writeln!(out, "all,{},{},{}", o.height_error, o.vx_error, o.torque_effort);
    out
}

fn pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("serializable") + "\n"
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::io(path.display(), e))
}

fn file_label(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect()
}

/// Plays `scenario` with a checkpoint.
pub fn evaluate(ckpt: &Checkpoint, scenario: &Scenario, label: &str, seed: u64) -> Result<Trajectory, Error> {
    let bundle = ckpt.bundle()?;
    let settings = ckpt.manifest.config.env_settings();
    run_scenario(&bundle, &settings, scenario, seed, &EvalOptions::labelled(label)).map_err(|e| match e {
        quadload_core::eval::EvalError::Scenario(s) => Error::Scenario(s.to_string()),
        other => Error::Other(other.to_string()),
    })
}

/// Writes the per-controller files and returns the metrics.
pub fn write_run(out: &Path, traj: &Trajectory, config_hash: &str) -> Result<MetricsTimeseries, Error> {
    fs::create_dir_all(out).map_err(|e| Error::io(out.display(), e))?;
    let m = metrics_from_trajectory(traj);
    let stem = file_label(&traj.controller);
    write(&out.join(format!("{stem}_timeseries.csv")), &timeseries_csv(&m, config_hash))?;
    write(&out.join(format!("{stem}_summary.json")), &pretty(&summary_json(&m, config_hash)))?;
    write(&out.join(format!("{stem}_plot.json")), &pretty(&plot_json(&m, config_hash)))?;
    write(&out.join(format!("{stem}_trajectory.json")), &pretty(traj))?;
    Ok(m)
}

#[derive(Debug, Clone)]
pub struct EvalRequest {
    pub ckpt: Checkpoint,
    pub scenario: String,
    pub label: Option<String>,
    pub seed: u64,
    pub out: PathBuf,
    pub compare: Option<Checkpoint>,
}

#[derive(Debug, Clone)]
pub struct EvalOutcome {
    pub metrics: MetricsTimeseries,
    pub comparison: Option<Comparison>,
}

pub fn run_eval(req: &EvalRequest) -> Result<EvalOutcome, Error> {
    let cfg = &req.ckpt.manifest.config;
    let scenario = load_scenario(&req.scenario, cfg.payload_scale())?;
    let label = req.label.clone().unwrap_or_else(|| default_label(req.ckpt.manifest.phase).to_string());
    let traj = evaluate(&req.ckpt, &scenario, &label, req.seed)?;
    let hash = &req.ckpt.manifest.config_hash;
    let metrics = write_run(&req.out, &traj, hash)?;

    let comparison = match &req.compare {
        None => None,
        Some(other) => {
            let mut other_label = default_label(other.manifest.phase).to_string();
            if other_label == label {
                other_label.push_str("_b");
            }
            let traj_b = evaluate(other, &scenario, &other_label, req.seed)?;
            let hash_b = &other.manifest.config_hash;
            let mb = write_run(&req.out, &traj_b, hash_b)?;
            let c = compare(&metrics, &mb).map_err(|e| Error::Scenario(e.to_string()))?;
            write(&req.out.join("comparison.json"), &pretty(&comparison_json(&c, hash, hash_b)))?;
            write(&req.out.join("comparison.csv"), &comparison_csv(&c, hash))?;
            Some(c)
        }
    };
    Ok(EvalOutcome { metrics, comparison })
}

/// Pools per-step height errors over several seeds.
pub fn pooled_height_errors(runs: &[MetricsTimeseries]) -> Vec<f64> {
    runs.iter().flat_map(|m| m.columns.height_error.iter().copied()).collect()
}

pub fn mean_height_error(m: &MetricsTimeseries) -> f64 {
    mean(&m.columns.height_error)
}

#[cfg(test)]
mod tests {
    use super::*;
    use quadload_core::eval::{FallEvent, Sample};

    fn traj() -> Trajectory {
        let s = Sample {
            t: 0.0,
            x: 0.0,
            pitch: 0.0,
            height: 0.3,
            vx: 0.1,
            cmd_vx: 0.4,
            cmd_height: 0.28,
            torque_effort: 3.0,
            delta: [0.0, 0.3, 0.4, 0.0],
            grf: [[0.0, 60.0], [0.0, 80.0]],
            payload: 0.0,
        };
        let s2 = Sample { t: 0.02, payload: 2.0, ..s };
        Trajectory {
            scenario: "x".into(),
            controller: "adaptive".into(),
            seed: 3,
            dt: 0.02,
            phase_starts: vec![0.0, 0.02],
            samples: vec![s, s2],
            fall: Some(FallEvent { t: 0.04, step: 1, phase: 1 }),
        }
    }

    #[test]
    fn csv_layout() {
        let m = metrics_from_trajectory(&traj());
        let csv = timeseries_csv(&m, "abc");
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines.contains(&"# config_hash=abc"));
        assert!(lines.contains(&"# seed=3"));
        let header = lines.iter().position(|l| !l.starts_with('#')).unwrap();
        assert_eq!(lines[header], TIMESERIES_COLUMNS.join(","));
        let rows: Vec<Vec<&str>> = lines[header + 1..].iter().map(|l| l.split(',').collect()).collect();
        assert_eq!(rows.len(), 2);
        assert!(rows.iter().all(|r| r.len() == TIMESERIES_COLUMNS.len()));
        assert_eq!(rows[1][2], "1");
        assert_eq!(rows[0][11], "0.5");
        assert_eq!(rows[0][12], "140");
        assert_eq!((rows[0][13], rows[1][13]), ("0", "1"));
    }

    #[test]
    fn summary_has_nulls_for_empty_phases() {
        let mut t = traj();
        t.phase_starts.push(5.0);
        let v = summary_json(&metrics_from_trajectory(&t), "h");
        assert_eq!(v["phases"][2]["samples"], 0);
        assert!(v["phases"][2]["height_error"]["mean"].is_null());
        assert_eq!(v["falls"][0]["step"], 1);
    }

    #[test]
    fn scenario_files_and_names() {
        assert_eq!(load_scenario("flat_steps", 1.0).unwrap().name, "flat_steps");
        assert!(matches!(load_scenario("nope", 1.0), Err(Error::Scenario(_))));
        let dir = tempfile::tempdir().unwrap();
        let mut sc = builtin_scenario("static_disks", 1.0).unwrap();
        sc.name = "custom".into();
        let path = dir.path().join("s.json");
        fs::write(&path, serde_json::to_string(&sc).unwrap()).unwrap();
        assert_eq!(load_scenario(path.to_str().unwrap(), 1.0).unwrap(), sc);
        sc.duration = 100.0;
        fs::write(&path, serde_json::to_string(&sc).unwrap()).unwrap();
        assert!(matches!(load_scenario(path.to_str().unwrap(), 1.0), Err(Error::Scenario(_))));
    }
}
