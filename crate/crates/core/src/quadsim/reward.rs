//! Locomotion reward.
//!
//! `r = v_fwd - 1e-6 |u|^2 - 1e-3 |f_impact|^2 + s`
//!
//! In [`RewardMode::Survival`] the last term `s` is 1 while the robot is
//! upright and 0 once it is falling, so standing still after a fall earns
//! nothing. [`RewardMode::Legacy`] keeps the older constant `+1` bonus for
//! comparison runs.

use std::fmt;
use std::str::FromStr;

pub const TORQUE_COST: f64 = 1e-6;
pub const IMPACT_COST: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardMode {
    #[default]
    Survival,
    Legacy,
}

impl FromStr for RewardMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "survival" => Ok(Self::Survival),
            "legacy" => Ok(Self::Legacy),
            other => Err(format!("unknown reward mode {other:?}")),
        }
    }
}

impl fmt::Display for RewardMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Survival => "survival",
            Self::Legacy => "legacy",
        })
    }
}

/// The four additive terms of one step's reward.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardTerms {
    pub forward: f64,
    pub torque: f64,
    pub impact: f64,
    pub alive: f64,
}

impl RewardTerms {
    pub fn total(&self) -> f64 {
        self.forward - self.torque - self.impact + self.alive
    }
}

pub fn reward_terms(mode: RewardMode, v_fwd: f64, torque_sq: f64, impact_sq: f64, falling: bool) -> RewardTerms {
    let alive = match mode {
        RewardMode::Legacy => 1.0,
        RewardMode::Survival if falling => 0.0,
        RewardMode::Survival => 1.0,
    };
    RewardTerms {
        forward: v_fwd,
        torque: TORQUE_COST * torque_sq,
        impact: IMPACT_COST * impact_sq,
        alive,
    }
}

pub fn squared_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

pub fn reward(mode: RewardMode, v_fwd: f64, torques: &[f64], impact: &[f64], falling: bool) -> f64 {
    reward_terms(mode, v_fwd, squared_norm(torques), squared_norm(impact), falling).total()
}
