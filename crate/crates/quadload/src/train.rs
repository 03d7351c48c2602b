//! Training driver: runs one phase, logs `metrics.csv`, writes a checkpoint.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use quadload_core::rewards::Term;
use quadload_core::rl::{IterationStats, Phase, PpoStats, RlError, Trainer};
use quadload_core::sim::SimError;

use crate::checkpoint::{Checkpoint, TrainerRng};
use crate::config::RunConfig;
use crate::{Error, RayonExecutor};

pub const METRICS_FILE: &str = "metrics.csv";
pub const CONFIG_FILE: &str = "config.json";
pub const CHECKPOINT_DIR: &str = "checkpoint";

#[derive(Debug, Clone)]
pub struct TrainRequest {
    pub phase: Phase,
    pub config: RunConfig,
    pub resume: Option<Checkpoint>,
    pub out: PathBuf,
}

pub fn phase_iterations(config: &RunConfig, phase: Phase) -> u32 {
    let t = &config.rl.train;
    match phase {
        Phase::One => t.phase1_iterations,
        Phase::Two => t.phase2_iterations,
        Phase::Baseline => t.baseline_iterations,
    }
}

fn ppo_columns(prefix: &str) -> Vec<String> {
    ["policy_loss", "value_loss", "entropy", "approx_kl", "clip_fraction", "updates", "early_stopped"]
        .iter()
        .map(|c| format!("{prefix}_{c}"))
        .collect()
}

pub fn metrics_header() -> Vec<String> {
    let mut cols: Vec<String> = [
        "iteration",
        "phase",
        "nominal_reward",
        "adaptive_reward",
        "episodes",
        "falls",
        "mean_episode_return",
        "mean_episode_length",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    cols.extend(ppo_columns("nominal"));
    cols.extend(ppo_columns("adaptive"));
    cols.extend(["cenet_loss", "cenet_velocity_loss", "cenet_recon_loss", "cenet_kl"].map(String::from));
    for prefix in ["nominal", "adaptive"] {
        cols.extend(Term::ALL.iter().map(|t| format!("{prefix}_{}", t.name())));
    }
    cols
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::One => "1",
        Phase::Two => "2",
        Phase::Baseline => "baseline",
    }
}

pub fn metrics_row(s: &IterationStats) -> String {
    let mut row = vec![
        s.iteration.to_string(),
        phase_name(s.phase).to_string(),
        s.nominal_reward.to_string(),
        s.adaptive_reward.to_string(),
        s.episodes.to_string(),
        s.falls.to_string(),
        s.mean_episode_return.to_string(),
        s.mean_episode_length.to_string(),
    ];
    let ppo = |p: Option<&PpoStats>| -> Vec<String> {
        match p {
            Some(p) => vec![
                p.policy_loss.to_string(),
                p.value_loss.to_string(),
                p.entropy.to_string(),
                p.approx_kl.to_string(),
                p.clip_fraction.to_string(),
                p.updates.to_string(),
                u8::from(p.early_stopped).to_string(),
            ],
            None => vec![String::new(); 7],
        }
    };
    row.extend(ppo(Some(&s.nominal)));
    row.extend(ppo(s.adaptive.as_ref()));
    row.extend([s.cenet_loss, s.cenet_velocity_loss, s.cenet_recon_loss, s.cenet_kl].map(|v| v.to_string()));
    row.extend(s.nominal_terms.iter().chain(&s.adaptive_terms).map(|v| v.to_string()));
    row.join(",")
}

/// `# key=value` lines that start every CSV artifact.
pub fn provenance(config_hash: &str, seed: u64, extra: &[(&str, String)]) -> String {
    let mut out = format!("# quadload {}\n# config_hash={config_hash}\n# seed={seed}\n", env!("CARGO_PKG_VERSION"));
    for (k, v) in extra {
        let _ = writeln!(out, "# {k}={v}");
    }
    out
}

fn diverged(s: &IterationStats) -> bool {
    let mut losses = vec![s.nominal.policy_loss, s.nominal.value_loss, s.cenet_loss];
    if let Some(a) = &s.adaptive {
        losses.extend([a.policy_loss, a.value_loss]);
    }
    losses.iter().any(|v| !v.is_finite())
}

fn map_rl(e: RlError) -> Error {
    match e {
        RlError::Sim { error: SimError::NonFiniteState { .. }, .. } => Error::Diverged(e.to_string()),
        RlError::PhaseMismatch(_) => Error::CheckpointMismatch(e.to_string()),
        RlError::InvalidConfig(_) => Error::Config(e.to_string()),
        other => Error::Other(other.to_string()),
    }
}

fn write(path: &Path, text: &str) -> Result<(), Error> {
    fs::write(path, text).map_err(|e| Error::io(path.display(), e))
}

/// Runs the requested phase to completion. Returns the written checkpoint.
pub fn run_training(req: TrainRequest, mut report: impl FnMut(&IterationStats)) -> Result<Checkpoint, Error> {
    let TrainRequest { phase, config, resume, out } = req;
    config.validate()?;
    let settings = config.env_settings();
    let train_cfg = config.rl.train.clone();
    let parent = resume.as_ref().map(|c| c.manifest.blob.sha256.clone());
    let mut trainer = match (phase, resume) {
        (Phase::Two, None) => {
            return Err(Error::CheckpointMismatch("phase 2 needs --resume with a phase-1 checkpoint".into()));
        }
        (Phase::Two, Some(ckpt)) => {
            let bundle = ckpt.bundle()?;
            match bundle.phase {
                Phase::One => Trainer::phase2(train_cfg, settings, bundle, RayonExecutor),
                Phase::Two => Trainer::with_bundle(train_cfg, settings, bundle, RayonExecutor),
                Phase::Baseline => {
                    return Err(Error::CheckpointMismatch("phase 2 cannot start from a baseline checkpoint".into()));
                }
            }
        }
        (p, Some(ckpt)) => {
            let bundle = ckpt.bundle()?;
            if bundle.phase != p {
                return Err(Error::CheckpointMismatch(format!(
                    "cannot resume phase {} from a phase {} checkpoint",
                    phase_name(p),
                    phase_name(bundle.phase)
                )));
            }
            Trainer::with_bundle(train_cfg, settings, bundle, RayonExecutor)
        }
        (p, None) => Trainer::fresh(train_cfg, settings, p, RayonExecutor),
    }
    .map_err(map_rl)?;

    fs::create_dir_all(&out).map_err(|e| Error::io(out.display(), e))?;
    let hash = config.hash();
    write(&out.join(CONFIG_FILE), &(config.to_json_pretty() + "\n"))?;
    let mut csv = provenance(&hash, config.rl.train.seed, &[("phase", phase_name(phase).to_string())]);
    csv.push_str(&metrics_header().join(","));
    csv.push('\n');

    let iterations = phase_iterations(&config, phase);
    let mut outcome = Ok(());
    for _ in 0..iterations {
        let stats = match trainer.iterate() {
            Ok(s) => s,
            Err(e) => {
                outcome = Err(map_rl(e));
                break;
            }
        };
        csv.push_str(&metrics_row(&stats));
        csv.push('\n');
        report(&stats);
        if diverged(&stats) {
            outcome = Err(Error::Diverged(format!("non-finite loss at iteration {}", stats.iteration)));
            break;
        }
    }
    write(&out.join(METRICS_FILE), &csv)?;
    outcome?;

    let (policy, update) = trainer.rng_state();
    let ckpt = Checkpoint::from_bundle(
        &trainer.bundle,
        &config,
        trainer.iteration,
        parent,
        Some(TrainerRng { policy, update }),
    );
    ckpt.save(&out.join(CHECKPOINT_DIR))?;
    Ok(ckpt)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_row_widths_agree() {
        let s = IterationStats {
            iteration: 1,
            phase: Phase::Two,
            nominal_reward: 0.1,
            adaptive_reward: 0.2,
            nominal_terms: [0.0; 12],
            adaptive_terms: [0.0; 12],
            episodes: 0,
            falls: 0,
            mean_episode_return: f64::NAN,
            mean_episode_length: f64::NAN,
            nominal: PpoStats::default(),
            adaptive: None,
            cenet_loss: 0.0,
            cenet_velocity_loss: 0.0,
            cenet_recon_loss: 0.0,
            cenet_kl: 0.0,
        };
        assert_eq!(metrics_row(&s).split(',').count(), metrics_header().len());
    }

    #[test]
    fn phase_two_without_resume_is_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let req = TrainRequest { phase: Phase::Two, config: RunConfig::default(), resume: None, out: dir.path().into() };
        let err = run_training(req, |_| {}).unwrap_err();
        assert_eq!(err.exit_code(), crate::exit::CHECKPOINT_MISMATCH);
    }
}
