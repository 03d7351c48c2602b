//! Simulation, force estimation and learning core for payload-adaptive
//! planar quadruped locomotion.
//!
//! The crate is `no_std` (with `alloc`). It contains everything that is pure
//! computation:
//!
//! - [`sim`]: sagittal-plane articulated quadruped with spring-damper contact,
//!   terrain profiles and the payload scheduler.
//! - [`kinematics`]: leg forward kinematics, foot Jacobians, the joint-torque
//!   foot-force estimator and PD tracking.
//! - [`obs`]: observation layout, augmented observation and history window.
//! - [`nets`]: tensors, reverse-mode gradients, MLPs, Gaussian policies and the
//!   context-estimator network.
//! - [`rewards`]: weighted reward terms for the nominal and adaptive policies.
//! - [`rl`]: environments, rollout collection, advantage estimation, PPO and
//!   the phase-1 / phase-2 / baseline training procedures.
//! - [`eval`]: scripted scenarios, live sessions, metrics and comparisons.
//!
//! File formats, configuration loading, the CLI and the telemetry server live
//! in the companion `quadload` crate.

#![no_std]
#![warn(missing_debug_implementations)]

extern crate alloc;

pub mod eval;
pub mod kinematics;
pub mod nets;
pub mod obs;
pub mod rewards;
pub mod rl;
pub mod rng;
pub mod sim;
