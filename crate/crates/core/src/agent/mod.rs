//! PPO learner: Gaussian actor, separate critic, GAE, clipped surrogate and
//! Adam, with backpropagation written out by hand.

mod adam;
mod gae;
pub mod mlp;
mod normalize;
mod policy;
mod ppo;

use thiserror::Error;

use crate::kv::{ConfigError, KvSection};
use crate::rng::Rng;

pub use adam::{clip_global_norm, Adam};
pub use gae::{compute_gae, normalize_advantages};
pub use mlp::{Activations, Mlp};
pub use normalize::{ObsNormalizer, RewardScaler, RunningStats};
pub use policy::{gaussian_log_prob, ActOutput, Policy, LOG_STD_MAX, LOG_STD_MIN};
pub use ppo::{minibatch_loss, ppo_update, LossGrads, LossParts, RolloutBatch, UpdateDiagnostics};

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("observation has width {0}")]
    ObservationWidth(usize),
    #[error("non-finite {0}")]
    NonFinite(&'static str),
    #[error("update on an empty batch")]
    EmptyBatch,
    #[error("update diverged (policy loss {policy_loss}, value loss {value_loss}, approx kl {approx_kl})")]
    Diverged { policy_loss: f64, value_loss: f64, approx_kl: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PpoConfig {
    pub learning_rate: f64,
    /// Steps collected per worker between updates.
    pub horizon: usize,
    pub minibatch_count: usize,
    pub epochs: usize,
    pub clip_epsilon: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub vf_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub hidden: Vec<usize>,
    pub normalize_obs: bool,
    pub scale_rewards: bool,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.00022,
            horizon: 128,
            minibatch_count: 4,
            epochs: 4,
            clip_epsilon: 0.2,
            gamma: 0.99,
            gae_lambda: 0.95,
            vf_coef: 0.5,
            entropy_coef: 0.01,
            max_grad_norm: 0.5,
            hidden: vec![64, 64],
            normalize_obs: true,
            scale_rewards: true,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: &str| Err(ConfigError::Invalid(msg.to_string()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if self.horizon == 0 || self.minibatch_count == 0 || self.epochs == 0 {
            return bad("horizon, minibatch_count and epochs must be at least 1");
        }
        if self.minibatch_count > self.horizon {
            return bad("minibatch_count cannot exceed horizon");
        }
        if !(self.clip_epsilon > 0.0) {
            return bad("clip_epsilon must be positive");
        }
        if !(0.0..=1.0).contains(&self.gamma) || !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gamma and gae_lambda must lie in [0, 1]");
        }
        if !(self.vf_coef >= 0.0 && self.entropy_coef >= 0.0 && self.max_grad_norm > 0.0) {
            return bad("coefficients must be non-negative and max_grad_norm positive");
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return bad("hidden layers must be non-empty");
        }
        Ok(())
    }

    pub fn apply_section(&mut self, section: &KvSection) -> Result<(), ConfigError> {
        for (key, value) in section.entries() {
            match key {
                "learning_rate" => self.learning_rate = section.parse_value(key, value)?,
                "horizon" => self.horizon = section.parse_value(key, value)?,
                "minibatch_count" => self.minibatch_count = section.parse_value(key, value)?,
                "epochs" => self.epochs = section.parse_value(key, value)?,
                "clip_epsilon" => self.clip_epsilon = section.parse_value(key, value)?,
                "gamma" => self.gamma = section.parse_value(key, value)?,
                "gae_lambda" => self.gae_lambda = section.parse_value(key, value)?,
                "vf_coef" => self.vf_coef = section.parse_value(key, value)?,
                "entropy_coef" => self.entropy_coef = section.parse_value(key, value)?,
                "max_grad_norm" => self.max_grad_norm = section.parse_value(key, value)?,
                "hidden" => {
                    self.hidden = value
                        .split(',')
                        .map(|v| section.parse_value(key, v.trim()))
                        .collect::<Result<_, _>>()?
                }
                "normalize_obs" => self.normalize_obs = section.parse_value(key, value)?,
                "scale_rewards" => self.scale_rewards = section.parse_value(key, value)?,
                _ => return Err(section.unknown(key)),
            }
        }
        self.validate()
    }

    pub fn to_section(&self) -> KvSection {
        let mut s = KvSection::new("ppo");
        s.set("learning_rate", self.learning_rate);
        s.set("horizon", self.horizon);
        s.set("minibatch_count", self.minibatch_count);
        s.set("epochs", self.epochs);
        s.set("clip_epsilon", self.clip_epsilon);
        s.set("gamma", self.gamma);
        s.set("gae_lambda", self.gae_lambda);
        s.set("vf_coef", self.vf_coef);
        s.set("entropy_coef", self.entropy_coef);
        s.set("max_grad_norm", self.max_grad_norm);
        let hidden: Vec<String> = self.hidden.iter().map(usize::to_string).collect();
        s.set("hidden", hidden.join(","));
        s.set("normalize_obs", self.normalize_obs);
        s.set("scale_rewards", self.scale_rewards);
        s
    }
}

/// Everything the learner carries between updates.
#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub policy: Policy,
    pub adam: Adam,
    pub obs_norm: ObsNormalizer,
    pub reward_scaler: RewardScaler,
}

impl Agent {
    pub fn new(obs_dim: usize, act_dim: usize, cfg: &PpoConfig, init_rng: &mut Rng) -> Self {
        let policy = Policy::new(obs_dim, act_dim, &cfg.hidden, init_rng);
        let adam = Adam::new(
            cfg.learning_rate,
            &[policy.mean_net.params.len(), policy.log_std.len(), policy.value_net.params.len()],
        );
        Self {
            policy,
            adam,
            obs_norm: ObsNormalizer::new(obs_dim),
            reward_scaler: RewardScaler::new(cfg.gamma),
        }
    }

    /// Observation as the networks see it.
    pub fn prepare_obs(&self, obs: &[f64], cfg: &PpoConfig, out: &mut Vec<f64>) {
        if cfg.normalize_obs {
            self.obs_norm.normalize_into(obs, out);
        } else {
            out.clear();
            out.extend_from_slice(obs);
        }
    }
}
