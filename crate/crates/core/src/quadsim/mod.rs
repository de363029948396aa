//! Deterministic planar quadruped: a torso and four two-joint legs, eight
//! torque-controlled actuators, penalty ground contact, and per-episode
//! actuator failure injection.

mod config;
pub mod model;
pub mod reward;
mod sim;
mod trace;

use thiserror::Error;

pub use config::SimConfig;
pub use reward::RewardMode;
pub use sim::{BodyState, QuadSim, SimSnapshot};
pub use trace::TrajectoryWriter;

use crate::failure::FailureError;
use crate::kv::ConfigError;

pub const ACT_DIM: usize = 8;
pub const OBS_DIM: usize = 27;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Failure(#[from] FailureError),
    #[error("action has {0} components, expected {ACT_DIM}")]
    ActionWidth(usize),
    #[error("action component {0} is not finite")]
    NonFiniteAction(usize),
    #[error("step called on a finished episode")]
    EpisodeFinished,
    #[error("simulation diverged at step {step}")]
    Diverged { step: usize },
}

/// Policy input: `joint_angles[8] ++ joint_velocities[8] ++ [z, pitch, vx,
/// vz, pitch_rate] ++ foot_contacts[4] ++ [episode_phase, 0]`.
///
/// The failure spec is deliberately absent.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub values: [f64; OBS_DIM],
}

impl Observation {
    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn torso_z(&self) -> f64 {
        self.values[16]
    }

    pub fn joint_angles(&self) -> &[f64] {
        &self.values[..8]
    }

    pub fn joint_velocities(&self) -> &[f64] {
        &self.values[8..16]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepInfo {
    pub v_fwd: f64,
    /// Squared norm of the torques that reached the joints.
    pub torque_sq: f64,
    /// Squared norm of the per-point normal contact forces, averaged over substeps.
    pub contact_force_sq: f64,
    pub falling: bool,
    /// Cumulative forward torso displacement this episode.
    pub progress: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}
