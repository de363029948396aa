use rand_distr::{Distribution, StandardNormal};

use super::mlp::{Activations, Mlp};
use super::AgentError;
use crate::rng::Rng;

pub const LOG_STD_MIN: f64 = -5.0;
pub const LOG_STD_MAX: f64 = 2.0;
const HALF_LOG_TWO_PI: f64 = 0.918_938_533_204_672_7;

/// Diagonal Gaussian actor with a state-independent log-std, plus a
/// separate critic.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub mean_net: Mlp,
    pub log_std: Vec<f64>,
    pub value_net: Mlp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActOutput {
    /// Sample clamped to `[-1, 1]`, ready for the simulator.
    pub action: Vec<f64>,
    /// Sample before clamping; the log-probability refers to this.
    pub raw_action: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

impl Policy {
    pub fn new(obs_dim: usize, act_dim: usize, hidden: &[usize], rng: &mut Rng) -> Self {
        let dims = |out: usize| {
            let mut d = vec![obs_dim];
            d.extend_from_slice(hidden);
            d.push(out);
            d
        };
        let gain = 2f64.sqrt();
        let mean_net = Mlp::orthogonal(&dims(act_dim), gain, 0.01, rng);
        let value_net = Mlp::orthogonal(&dims(1), gain, 1.0, rng);
        Self {
            mean_net,
            log_std: vec![0.0; act_dim],
            value_net,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.input_dim()
    }

    pub fn act_dim(&self) -> usize {
        self.log_std.len()
    }

    pub fn mean(&self, obs: &[f64]) -> Vec<f64> {
        self.mean_net.predict(obs)
    }

    pub fn value(&self, obs: &[f64]) -> f64 {
        self.value_net.predict(obs)[0]
    }

    /// Samples an action for an (already normalized) observation.
    pub fn act(&self, obs: &[f64], rng: &mut Rng) -> Result<ActOutput, AgentError> {
        let mut acts = Activations::default();
        self.act_with(obs, rng, &mut acts)
    }

    pub fn act_with(&self, obs: &[f64], rng: &mut Rng, acts: &mut Activations) -> Result<ActOutput, AgentError> {
        if obs.len() != self.obs_dim() {
            return Err(AgentError::ObservationWidth(obs.len()));
        }
        if obs.iter().any(|v| !v.is_finite()) {
            return Err(AgentError::NonFinite("observation"));
        }
        self.mean_net.forward(obs, acts);
        let mean = acts.output().to_vec();
        self.value_net.forward(obs, acts);
        let value = acts.output()[0];
        if mean.iter().any(|m| !m.is_finite()) || !value.is_finite() {
            return Err(AgentError::NonFinite("network output"));
        }
        let raw_action: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let eps: f64 = StandardNormal.sample(rng);
                m + ls.exp() * eps
            })
            .collect();
        let log_prob = gaussian_log_prob(&mean, &self.log_std, &raw_action);
        let action = raw_action.iter().map(|a| a.clamp(-1.0, 1.0)).collect();
        Ok(ActOutput {
            action,
            raw_action,
            log_prob,
            value,
        })
    }

    /// Mean action clamped to `[-1, 1]`.
    pub fn act_deterministic(&self, obs: &[f64], acts: &mut Activations) -> Result<Vec<f64>, AgentError> {
        self.mean_net.forward(obs, acts);
        let mean = acts.output();
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(AgentError::NonFinite("network output"));
        }
        Ok(mean.iter().map(|m| m.clamp(-1.0, 1.0)).collect())
    }

    pub fn entropy(&self) -> f64 {
        self.log_std.iter().map(|ls| ls + 0.5 + HALF_LOG_TWO_PI).sum()
    }

    pub fn clamp_log_std(&mut self) {
        for ls in &mut self.log_std {
            *ls = ls.clamp(LOG_STD_MIN, LOG_STD_MAX);
        }
    }

    pub fn is_finite(&self) -> bool {
        self.mean_net
            .params
            .iter()
            .chain(&self.log_std)
            .chain(&self.value_net.params)
            .all(|v| v.is_finite())
    }
}

pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - HALF_LOG_TWO_PI
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    fn policy() -> Policy {
        let mut rng = stream(0, Purpose::Init, 0);
        let mut p = Policy::new(3, 2, &[8, 8], &mut rng);
        // push the mean away from zero so clamping and sampling are visible
        let n = p.mean_net.params.len();
        p.mean_net.params[n - 2] = 0.3;
        p.mean_net.params[n - 1] = -0.2;
        p
    }

    #[test]
    fn log_prob_matches_closed_form() {
        let lp = gaussian_log_prob(&[0.0], &[0.0], &[0.0]);
        assert!((lp + 0.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-15);
        let lp = gaussian_log_prob(&[1.0, 0.0], &[2f64.ln(), 0.0], &[3.0, 1.0]);
        let expect = -0.5 - 2f64.ln() - 0.5 - (2.0 * std::f64::consts::PI).ln();
        assert!((lp - expect).abs() < 1e-12);
    }

    #[test]
    fn vanishing_noise_returns_the_mean() {
        let mut p = policy();
        p.log_std = vec![LOG_STD_MIN; 2];
        let obs = [0.1, 0.2, 0.3];
        let mean = p.mean(&obs);
        let mut rng = stream(1, Purpose::Policy, 0);
        let out = p.act(&obs, &mut rng).unwrap();
        for (a, m) in out.action.iter().zip(&mean) {
            assert!((a - m).abs() < 1e-2);
        }
    }

    #[test]
    fn same_seed_same_sample() {
        let p = policy();
        let obs = [0.5, -0.5, 0.0];
        let a = p.act(&obs, &mut stream(2, Purpose::Policy, 0)).unwrap();
        let b = p.act(&obs, &mut stream(2, Purpose::Policy, 0)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sample_mean_tracks_network_mean() {
        let p = policy();
        let obs = [0.5, -0.5, 0.0];
        let mean = p.mean(&obs);
        let mut rng = stream(3, Purpose::Policy, 0);
        let n = 10_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let out = p.act(&obs, &mut rng).unwrap();
            assert!(out.action.iter().all(|a| (-1.0..=1.0).contains(a)));
            sum[0] += out.raw_action[0];
            sum[1] += out.raw_action[1];
        }
        for j in 0..2 {
            let sigma = p.log_std[j].exp();
            assert!((sum[j] / n as f64 - mean[j]).abs() < 3.0 * sigma / 100.0);
        }
    }

    #[test]
    fn rejects_bad_observations() {
        let p = policy();
        let mut rng = stream(4, Purpose::Policy, 0);
        assert_eq!(p.act(&[0.0; 2], &mut rng), Err(AgentError::ObservationWidth(2)));
        assert!(p.act(&[f64::NAN, 0.0, 0.0], &mut rng).is_err());
    }

    #[test]
    fn log_std_clamp() {
        let mut p = policy();
        p.log_std = vec![-9.0, 4.0];
        p.clamp_log_std();
        assert_eq!(p.log_std, vec![LOG_STD_MIN, LOG_STD_MAX]);
    }
}
