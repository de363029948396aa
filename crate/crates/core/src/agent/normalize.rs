/// Running per-component mean and variance, merged batch by batch.
#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
    pub count: f64,
}

impl RunningStats {
    pub fn new(dim: usize) -> Self {
        // a tiny prior count keeps the first merge well defined
        Self {
            mean: vec![0.0; dim],
            var: vec![1.0; dim],
            count: 1e-4,
        }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Merges a batch of rows (each of width `dim`).
    pub fn update<'a>(&mut self, rows: impl IntoIterator<Item = &'a [f64]>) {
        let dim = self.dim();
        let mut n = 0.0;
        let mut sum = vec![0.0; dim];
        let mut rows_buf: Vec<&[f64]> = Vec::new();
        for row in rows {
            assert_eq!(row.len(), dim);
            for (s, v) in sum.iter_mut().zip(row) {
                *s += v;
            }
            n += 1.0;
            rows_buf.push(row);
        }
        if n == 0.0 {
            return;
        }
        let batch_mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
        let mut batch_var = vec![0.0; dim];
        for row in &rows_buf {
            for ((bv, v), m) in batch_var.iter_mut().zip(row.iter()).zip(&batch_mean) {
                *bv += (v - m) * (v - m);
            }
        }
        for bv in &mut batch_var {
            *bv /= n;
        }
        let total = self.count + n;
        for i in 0..dim {
            let delta = batch_mean[i] - self.mean[i];
            let m2 = self.var[i] * self.count + batch_var[i] * n + delta * delta * self.count * n / total;
            self.mean[i] += delta * n / total;
            self.var[i] = m2 / total;
        }
        self.count = total;
    }
}

/// Standardizes observations with running statistics, clipped to ±`clip`.
#[derive(Debug, Clone, PartialEq)]
pub struct ObsNormalizer {
    pub stats: RunningStats,
    pub clip: f64,
}

impl ObsNormalizer {
    pub fn new(dim: usize) -> Self {
        Self {
            stats: RunningStats::new(dim),
            clip: 10.0,
        }
    }

    pub fn normalize_into(&self, obs: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for ((v, m), var) in obs.iter().zip(&self.stats.mean).zip(&self.stats.var) {
            out.push(((v - m) / (var + 1e-8).sqrt()).clamp(-self.clip, self.clip));
        }
    }

    pub fn normalize(&self, obs: &[f64]) -> Vec<f64> {
        let mut out = Vec::with_capacity(obs.len());
        self.normalize_into(obs, &mut out);
        out
    }
}

/// Divides rewards by the running standard deviation of the discounted
/// return, keeping value targets on a stable scale.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardScaler {
    pub stats: RunningStats,
    pub gamma: f64,
}

impl RewardScaler {
    pub fn new(gamma: f64) -> Self {
        Self {
            stats: RunningStats::new(1),
            gamma,
        }
    }

    pub fn scale(&self) -> f64 {
        (self.stats.var[0] + 1e-8).sqrt()
    }

    /// Advances a worker's discounted-return accumulator over one step and
    /// returns the value to feed the statistics.
    pub fn accumulate(&self, running_return: &mut f64, reward: f64, done: bool) -> f64 {
        *running_return = *running_return * self.gamma + reward;
        let sample = *running_return;
        if done {
            *running_return = 0.0;
        }
        sample
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn batched_merge_matches_direct_moments(
            data in proptest::collection::vec(-100.0..100.0f64, 2..200),
            split in 1usize..199,
        ) {
            let split = split.min(data.len() - 1);
            let mut stats = RunningStats { mean: vec![0.0], var: vec![0.0], count: 0.0 };
            stats.update(data[..split].chunks(1));
            stats.update(data[split..].chunks(1));
            let n = data.len() as f64;
            let mean = data.iter().sum::<f64>() / n;
            let var = data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            prop_assert!((stats.mean[0] - mean).abs() < 1e-9);
            prop_assert!((stats.var[0] - var).abs() < 1e-7 * var.max(1.0));
        }
    }

    #[test]
    fn normalizer_clips() {
        let mut norm = ObsNormalizer::new(2);
        norm.stats.mean = vec![1.0, 0.0];
        norm.stats.var = vec![4.0, 1e-6];
        let out = norm.normalize(&[3.0, 1.0]);
        assert!((out[0] - 1.0).abs() < 1e-8);
        assert_eq!(out[1], 10.0);
    }

    #[test]
    fn reward_accumulator_resets_on_done() {
        let scaler = RewardScaler::new(0.5);
        let mut ret = 0.0;
        assert_eq!(scaler.accumulate(&mut ret, 1.0, false), 1.0);
        assert_eq!(scaler.accumulate(&mut ret, 1.0, true), 1.5);
        assert_eq!(ret, 0.0);
    }
}
