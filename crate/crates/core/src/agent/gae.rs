/// Generalized advantage estimates and value targets.
///
/// `dones[t]` marks that step `t` ended its episode, so no value is
/// bootstrapped across it. `bootstrap_value` is the critic's estimate for the
/// state after the last step.
pub fn compute_gae(rewards: &[f64], values: &[f64], dones: &[bool], bootstrap_value: f64, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len());
    assert_eq!(rewards.len(), dones.len());
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let next_value = if t + 1 < n { values[t + 1] } else { bootstrap_value };
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * live - values[t];
        running = delta + gamma * lambda * live * running;
        advantages[t] = running;
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    (advantages, returns)
}

/// Shifts and scales in place to mean 0 and (population) std 1.
pub fn normalize_advantages(advantages: &mut [f64]) {
    let n = advantages.len();
    if n < 2 {
        return;
    }
    let mean = advantages.iter().sum::<f64>() / n as f64;
    let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n as f64;
    let std = var.sqrt().max(1e-8);
    for a in advantages {
        *a = (*a - mean) / std;
    }
}
