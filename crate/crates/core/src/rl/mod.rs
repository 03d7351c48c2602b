//! Environments, rollout collection, advantage estimation, PPO and the
//! phase-1 / phase-2 / baseline training procedures.
//!
//! Two policies share one context estimator. The nominal policy sees
//! `[o_t, z_t, v̂_t]` and emits `a_t`; the adaptive policy sees
//! `[õ_t, z_t, v̂_t]` and emits a bounded correction `Δa_t`. The joint target
//! is `θ_stand + a_t + Δa_t`. Each policy is trained by its own PPO objective
//! on its own reward stream and critic, treating the other policy's action as
//! part of the environment.

mod buffer;
mod bundle;
mod env;
mod executor;
mod gae;
mod ppo;
mod trainer;

pub use buffer::RolloutBuffer;
pub use bundle::{ActMode, BatchAction, BundleSpec, Phase, PolicyBundle, CRITIC_DIM, NOMINAL_INPUT_DIM};
pub use env::{
    CommandDriver, Env, EnvObservation, EnvOptions, EnvSettings, PayloadDriver, StepResult, TerrainCurriculum,
    TerrainSource,
};
pub use executor::{Executor, Sequential};
pub use gae::{compute_gae, normalize};
pub use ppo::{clipped_surrogate, ppo_loss, PpoBatch, PpoConfig, PpoLoss, PpoStats};
pub use trainer::{IterationStats, TrainConfig, Trainer};

use core::fmt;

use crate::nets::NetError;
use crate::sim::SimError;

#[derive(Debug, Clone, PartialEq)]
pub enum RlError {
    Sim { iteration: u32, env: usize, error: SimError },
    Net(NetError),
    /// Loaded parameters do not fit the requested phase or configuration.
    PhaseMismatch(&'static str),
    InvalidConfig(&'static str),
}

impl fmt::Display for RlError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RlError::Sim { iteration, env, error } => {
                write!(f, "iteration {iteration}, environment {env}: {error}")
            }
            RlError::Net(e) => write!(f, "network error: {e}"),
            RlError::PhaseMismatch(why) => write!(f, "phase mismatch: {why}"),
            RlError::InvalidConfig(why) => write!(f, "invalid training config: {why}"),
        }
    }
}

impl core::error::Error for RlError {}

impl From<NetError> for RlError {
    fn from(e: NetError) -> Self {
        RlError::Net(e)
    }
}
