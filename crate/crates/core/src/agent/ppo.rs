use rand::seq::SliceRandom;

use super::adam::{clip_global_norm, Adam};
use super::gae::normalize_advantages;
use super::mlp::Activations;
use super::policy::{gaussian_log_prob, Policy};
use super::{AgentError, PpoConfig};
use crate::rng::Rng;

/// Flattened on-policy samples ready for an update.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RolloutBatch {
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Normalized observations, row-major.
    pub obs: Vec<f64>,
    /// Pre-clamp actions, row-major.
    pub actions: Vec<f64>,
    pub log_probs: Vec<f64>,
    pub values: Vec<f64>,
    pub advantages: Vec<f64>,
    pub returns: Vec<f64>,
}

impl RolloutBatch {
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        Self {
            obs_dim,
            act_dim,
            ..Self::default()
        }
    }

    pub fn len(&self) -> usize {
        self.log_probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_probs.is_empty()
    }

    pub fn obs_row(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action_row(&self, i: usize) -> &[f64] {
        &self.actions[i * self.act_dim..(i + 1) * self.act_dim]
    }
}

/// Gradients of the PPO loss, one vector per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct LossGrads {
    pub mean: Vec<f64>,
    pub log_std: Vec<f64>,
    pub value: Vec<f64>,
}

impl LossGrads {
    pub fn zeros(policy: &Policy) -> Self {
        Self {
            mean: vec![0.0; policy.mean_net.params.len()],
            log_std: vec![0.0; policy.log_std.len()],
            value: vec![0.0; policy.value_net.params.len()],
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossParts {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
}

impl LossParts {
    pub fn total(&self, cfg: &PpoConfig) -> f64 {
        self.policy_loss + cfg.vf_coef * self.value_loss - cfg.entropy_coef * self.entropy
    }

    fn is_finite(&self) -> bool {
        [self.policy_loss, self.value_loss, self.entropy, self.approx_kl].iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateDiagnostics {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub grad_norm: f64,
}

/// Clipped-surrogate loss (to be minimized) on the samples `indices`,
/// using `advantages` in place of the batch's own.
pub fn minibatch_loss(policy: &Policy, batch: &RolloutBatch, advantages: &[f64], indices: &[usize], cfg: &PpoConfig) -> (LossParts, LossGrads) {
    let mut grads = LossGrads::zeros(policy);
    let mut parts = LossParts::default();
    let n = indices.len() as f64;
    let mut acts = Activations::default();
    let stds: Vec<f64> = policy.log_std.iter().map(|ls| ls.exp()).collect();
    let mut grad_mean_out = vec![0.0; policy.act_dim()];
    for &i in indices {
        let obs = batch.obs_row(i);
        let action = batch.action_row(i);
        let adv = advantages[i];

        policy.mean_net.forward(obs, &mut acts);
        let mean = acts.output();
        let log_prob = gaussian_log_prob(mean, &policy.log_std, action);
        let ratio = (log_prob - batch.log_probs[i]).exp();
        let clipped = ratio.clamp(1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon);
        let surr_raw = ratio * adv;
        let surr_clip = clipped * adv;
        parts.policy_loss -= surr_raw.min(surr_clip) / n;
        parts.approx_kl += (batch.log_probs[i] - log_prob) / n;
        if (ratio - 1.0).abs() > cfg.clip_epsilon {
            parts.clip_fraction += 1.0 / n;
        }
        // gradient flows only through the unclipped branch when it is the minimum
        if surr_raw <= surr_clip {
            let d_logp = -adv * ratio / n;
            for j in 0..policy.act_dim() {
                let z = (action[j] - mean[j]) / stds[j];
                grad_mean_out[j] = d_logp * z / stds[j];
                grads.log_std[j] += d_logp * (z * z - 1.0);
            }
            policy.mean_net.backward(&acts, &grad_mean_out, &mut grads.mean);
        }

        policy.value_net.forward(obs, &mut acts);
        let err = acts.output()[0] - batch.returns[i];
        parts.value_loss += err * err / n;
        policy.value_net.backward(&acts, &[cfg.vf_coef * 2.0 * err / n], &mut grads.value);
    }
    parts.entropy = policy.entropy();
    for g in &mut grads.log_std {
        *g -= cfg.entropy_coef;
    }
    (parts, grads)
}

/// Runs `epochs` passes of shuffled minibatch Adam steps over the batch.
///
/// On a non-finite loss or gradient the policy and optimizer are left as
/// they were before the call.
pub fn ppo_update(policy: &mut Policy, adam: &mut Adam, batch: &RolloutBatch, cfg: &PpoConfig, rng: &mut Rng) -> Result<UpdateDiagnostics, AgentError> {
    if batch.is_empty() {
        return Err(AgentError::EmptyBatch);
    }
    let saved = (policy.clone(), adam.clone());
    let mut advantages = batch.advantages.clone();
    normalize_advantages(&mut advantages);
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let chunk = batch.len().div_ceil(cfg.minibatch_count.max(1));
    let mut diag = UpdateDiagnostics::default();
    let mut steps = 0.0;
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        for indices in order.chunks(chunk) {
            let (parts, mut grads) = minibatch_loss(policy, batch, &advantages, indices, cfg);
            let grads_finite = grads.mean.iter().chain(&grads.log_std).chain(&grads.value).all(|g| g.is_finite());
            if !parts.is_finite() || !grads_finite {
                (*policy, *adam) = saved;
                return Err(AgentError::Diverged {
                    policy_loss: parts.policy_loss,
                    value_loss: parts.value_loss,
                    approx_kl: parts.approx_kl,
                });
            }
            let norm = clip_global_norm(&mut [&mut grads.mean, &mut grads.log_std, &mut grads.value], cfg.max_grad_norm);
            adam.step(
                &mut [&mut policy.mean_net.params, &mut policy.log_std, &mut policy.value_net.params],
                &[&grads.mean, &grads.log_std, &grads.value],
            );
            policy.clamp_log_std();
            diag.policy_loss += parts.policy_loss;
            diag.value_loss += parts.value_loss;
            diag.entropy += parts.entropy;
            diag.approx_kl += parts.approx_kl;
            diag.clip_fraction += parts.clip_fraction;
            diag.grad_norm += norm;
            steps += 1.0;
        }
    }
    for v in [
        &mut diag.policy_loss,
        &mut diag.value_loss,
        &mut diag.entropy,
        &mut diag.approx_kl,
        &mut diag.clip_fraction,
        &mut diag.grad_norm,
    ] {
        *v /= steps;
    }
    Ok(diag)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};
    use rand::Rng as _;

    fn setup(seed: u64, n: usize) -> (Policy, RolloutBatch) {
        let mut rng = stream(seed, Purpose::Init, 0);
        let mut policy = Policy::new(4, 2, &[6, 5], &mut rng);
        for p in policy.mean_net.params.iter_mut().chain(policy.value_net.params.iter_mut()) {
            *p += rng.random_range(-0.3..0.3);
        }
        policy.log_std = vec![rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)];
        let mut batch = RolloutBatch::new(4, 2);
        for _ in 0..n {
            let obs: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            let act = policy.act(&obs, &mut rng).unwrap();
            batch.obs.extend(&obs);
            batch.actions.extend(&act.raw_action);
            // perturb the behaviour log-prob so ratios spread around 1
            batch.log_probs.push(act.log_prob + rng.random_range(-0.1..0.1));
            batch.values.push(act.value);
            batch.advantages.push(rng.random_range(-2.0..2.0));
            batch.returns.push(rng.random_range(-2.0..2.0));
        }
        (policy, batch)
    }

    fn total_loss(policy: &Policy, batch: &RolloutBatch, cfg: &PpoConfig) -> f64 {
        let idx: Vec<usize> = (0..batch.len()).collect();
        minibatch_loss(policy, batch, &batch.advantages, &idx, cfg).0.total(cfg)
    }

    #[test]
    fn loss_gradients_match_finite_differences() {
        let cfg = PpoConfig::default();
        let (policy, batch) = setup(7, 12);
        let idx: Vec<usize> = (0..batch.len()).collect();
        let (_, grads) = minibatch_loss(&policy, &batch, &batch.advantages, &idx, &cfg);
        let h = 1e-6;
        let check = |analytic: f64, perturb: &dyn Fn(&mut Policy, f64)| {
            let mut plus = policy.clone();
            perturb(&mut plus, h);
            let mut minus = policy.clone();
            perturb(&mut minus, -h);
            let fd = (total_loss(&plus, &batch, &cfg) - total_loss(&minus, &batch, &cfg)) / (2.0 * h);
            let err = (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(1e-6);
            assert!(err < 1e-4, "fd {fd} analytic {analytic}");
        };
        for i in (0..grads.mean.len()).step_by(3) {
            check(grads.mean[i], &|p, d| p.mean_net.params[i] += d);
        }
        for j in 0..2 {
            check(grads.log_std[j], &|p, d| p.log_std[j] += d);
        }
        for i in (0..grads.value.len()).step_by(3) {
            check(grads.value[i], &|p, d| p.value_net.params[i] += d);
        }
    }

    #[test]
    fn zero_advantages_leave_only_value_and_entropy() {
        let cfg = PpoConfig::default();
        let (policy, mut batch) = setup(8, 10);
        batch.advantages = vec![0.0; 10];
        let idx: Vec<usize> = (0..10).collect();
        let (parts, grads) = minibatch_loss(&policy, &batch, &batch.advantages, &idx, &cfg);
        assert_eq!(parts.policy_loss, 0.0);
        assert!(grads.mean.iter().all(|&g| g == 0.0));
        assert!(grads.log_std.iter().all(|&g| g == -cfg.entropy_coef));
    }

    #[test]
    fn unit_ratio_gives_the_vanilla_policy_gradient() {
        let cfg = PpoConfig {
            vf_coef: 0.0,
            entropy_coef: 0.0,
            ..PpoConfig::default()
        };
        let (policy, mut batch) = setup(9, 8);
        for i in 0..8 {
            let mean = policy.mean(batch.obs_row(i));
            batch.log_probs[i] = gaussian_log_prob(&mean, &policy.log_std, batch.action_row(i));
        }
        let idx: Vec<usize> = (0..8).collect();
        let (_, grads) = minibatch_loss(&policy, &batch, &batch.advantages, &idx, &cfg);
        // -mean(A * grad log pi) for log-std, computed directly
        for j in 0..2 {
            let sigma = policy.log_std[j].exp();
            let vanilla: f64 = (0..8)
                .map(|i| {
                    let z = (batch.action_row(i)[j] - policy.mean(batch.obs_row(i))[j]) / sigma;
                    -batch.advantages[i] * (z * z - 1.0) / 8.0
                })
                .sum();
            assert!((grads.log_std[j] - vanilla).abs() < 1e-12);
        }
    }

    #[test]
    fn per_sample_objective_respects_clip_bound() {
        let cfg = PpoConfig::default();
        let (policy, mut batch) = setup(10, 50);
        let mut rng = stream(10, Purpose::Minibatch, 0);
        for lp in &mut batch.log_probs {
            *lp += rng.random_range(-2.0..2.0);
        }
        for i in 0..batch.len() {
            let (parts, _) = minibatch_loss(&policy, &batch, &batch.advantages, &[i], &cfg);
            let a = batch.advantages[i].abs();
            let bound = ((1.0 - cfg.clip_epsilon) * a).max((1.0 + cfg.clip_epsilon) * a);
            // the negative side is unbounded by design; the bound caps gains
            assert!(-parts.policy_loss <= bound + 1e-12);
        }
    }

    #[test]
    fn update_is_deterministic_and_finite() {
        let cfg = PpoConfig::default();
        let (policy, batch) = setup(11, 32);
        let run = || {
            let mut p = policy.clone();
            let mut adam = Adam::new(cfg.learning_rate, &[p.mean_net.params.len(), 2, p.value_net.params.len()]);
            let diag = ppo_update(&mut p, &mut adam, &batch, &cfg, &mut stream(0, Purpose::Minibatch, 0)).unwrap();
            (p, diag)
        };
        let (a, da) = run();
        let (b, db) = run();
        assert_eq!(a, b);
        assert_eq!(da, db);
        assert!(a.is_finite() && a != policy);
    }

    #[test]
    fn diverged_update_restores_parameters() {
        let cfg = PpoConfig::default();
        let (mut policy, mut batch) = setup(12, 8);
        batch.returns[3] = f64::NAN;
        let before = policy.clone();
        let mut adam = Adam::new(cfg.learning_rate, &[policy.mean_net.params.len(), 2, policy.value_net.params.len()]);
        let err = ppo_update(&mut policy, &mut adam, &batch, &cfg, &mut stream(0, Purpose::Minibatch, 0));
        assert!(matches!(err, Err(AgentError::Diverged { .. })));
        assert_eq!(policy, before);
        assert_eq!(adam.steps, 0);
    }
}
