//! PPO on a one-dimensional "move right" task: the state is a position on a
//! line, the action a displacement in [-1, 1], and the reward max(0, x).

use faultwalk::agent::{compute_gae, ppo_update, Adam, Policy, PpoConfig, RolloutBatch};
use faultwalk::rng::{self, Purpose};
use rand::Rng as _;

const LENGTH: usize = 20;

struct Line {
    x: f64,
    t: usize,
}

impl Line {
    fn obs(&self) -> [f64; 2] {
        [self.x / LENGTH as f64, self.t as f64 / LENGTH as f64]
    }

    /// Returns (reward, done).
    fn step(&mut self, a: f64) -> (f64, bool) {
        self.x += a.clamp(-1.0, 1.0);
        self.t += 1;
        (self.x.max(0.0), self.t == LENGTH)
    }
}

fn random_return(episodes: usize) -> f64 {
    let mut rng = rng::stream(1, Purpose::Eval, 0);
    let mut total = 0.0;
    for _ in 0..episodes {
        let mut env = Line { x: 0.0, t: 0 };
        loop {
            let (r, done) = env.step(rng.random_range(-1.0..=1.0));
            total += r;
            if done {
                break;
            }
        }
    }
    total / episodes as f64
}

#[test]
fn learns_to_move_right() {
    let cfg = PpoConfig::default();
    let mut init = rng::stream(0, Purpose::Init, 0);
    let mut policy = Policy::new(2, 1, &cfg.hidden, &mut init);
    let mut adam = Adam::new(cfg.learning_rate, &[policy.mean_net.params.len(), 1, policy.value_net.params.len()]);
    let mut act_rng = rng::stream(0, Purpose::Policy, 0);
    let mut mb_rng = rng::stream(0, Purpose::Minibatch, 0);

    let mut env = Line { x: 0.0, t: 0 };
    let mut episode_return = 0.0;
    let mut recent = Vec::new();
    for update in 0..200 {
        let mut batch = RolloutBatch::new(2, 1);
        let (mut rewards, mut dones) = (Vec::new(), Vec::new());
        for _ in 0..cfg.horizon {
            let obs = env.obs();
            let out = policy.act(&obs, &mut act_rng).unwrap();
            let (r, done) = env.step(out.action[0]);
            batch.obs.extend_from_slice(&obs);
            batch.actions.extend_from_slice(&out.raw_action);
            batch.log_probs.push(out.log_prob);
            batch.values.push(out.value);
            rewards.push(r / LENGTH as f64);
            dones.push(done);
            episode_return += r;
            if done {
                if update >= 190 {
                    recent.push(episode_return);
                }
                episode_return = 0.0;
                env = Line { x: 0.0, t: 0 };
            }
        }
        let bootstrap = if env.t == 0 { 0.0 } else { policy.value(&env.obs()) };
        let (adv, ret) = compute_gae(&rewards, &batch.values, &dones, bootstrap, cfg.gamma, cfg.gae_lambda);
        batch.advantages = adv;
        batch.returns = ret;
        ppo_update(&mut policy, &mut adam, &batch, &cfg, &mut mb_rng).unwrap();
    }
    let trained = recent.iter().sum::<f64>() / recent.len() as f64;
    let random = random_return(500);
    assert!(random > 0.0);
    assert!(trained >= 5.0 * random, "trained {trained:.1} vs random {random:.1}");
}
