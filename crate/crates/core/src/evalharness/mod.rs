//! Evaluation protocols: plain and broken conditions, coefficient sweeps,
//! multi-seed aggregation with standard errors, policy comparison and plots.

mod compare;
mod tables;
pub mod svg;

use rand::Rng as _;
use rayon::prelude::*;
use thiserror::Error;

use crate::agent::{Activations, Agent, AgentError, PpoConfig};
use crate::failure::{sample_k, sample_leg, FailureError, FailureSpec, K_MAX};
use crate::quadsim::{Observation, QuadSim, SimConfig, SimError, ACT_DIM};
use crate::rng::{self, Purpose, Rng};

pub use compare::{compare, rank_with_ties, ComparisonRow, ComparisonTable, COMPARISON_HEADER};
pub use tables::{parse_curve_csv, parse_summary_csv, write_curve_csv, write_summary_csv, write_trials_csv};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("invalid condition: {0}")]
    Condition(String),
    #[error(transparent)]
    Failure(#[from] FailureError),
    #[error("trial {trial} of seed {seed}: {source}")]
    Sim { seed: u64, trial: usize, source: SimError },
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error("cannot compare: {0}")]
    Mismatch(String),
    #[error("{0}")]
    Parse(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum KDistribution {
    Fixed(f64),
    Uniform(f64, f64),
    /// Every value is run for `trials` episodes per seed.
    Grid(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalCondition {
    pub name: String,
    pub k_distribution: KDistribution,
    pub trials: usize,
    pub seeds: Vec<u64>,
}

impl EvalCondition {
    /// Nominal actuators.
    pub fn plain(trials: usize, seeds: Vec<u64>) -> Self {
        Self {
            name: "plain".into(),
            k_distribution: KDistribution::Fixed(1.0),
            trials,
            seeds,
        }
    }

    /// One random leg per trial with `k ~ Uni(0, 0.5)`.
    pub fn broken(trials: usize, seeds: Vec<u64>) -> Self {
        Self {
            name: "broken".into(),
            k_distribution: KDistribution::Uniform(0.0, 0.5),
            trials,
            seeds,
        }
    }

    pub fn k_sweep(grid: Vec<f64>, trials: usize, seeds: Vec<u64>) -> Self {
        Self {
            name: "k_sweep".into(),
            k_distribution: KDistribution::Grid(grid),
            trials,
            seeds,
        }
    }

    /// `0.0, step, 2 step, ...` up to and including `max` (within rounding).
    pub fn grid(max: f64, step: f64) -> Vec<f64> {
        let n = (max / step + 1e-9).floor() as usize;
        (0..=n).map(|i| (i as f64 * step * 1e9).round() / 1e9).collect()
    }

    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |msg: String| Err(EvalError::Condition(msg));
        if self.trials == 0 {
            return bad("trials must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let in_range = |k: f64| k.is_finite() && (0.0..=K_MAX).contains(&k);
        match &self.k_distribution {
            KDistribution::Fixed(k) if !in_range(*k) => bad(format!("k {k} outside [0, {K_MAX}]")),
            KDistribution::Uniform(lo, hi) if !(in_range(*lo) && in_range(*hi) && lo <= hi) => {
                bad(format!("interval [{lo}, {hi}] invalid"))
            }
            KDistribution::Grid(g) if g.is_empty() => bad("empty k grid".into()),
            KDistribution::Grid(g) if !g.iter().all(|&k| in_range(k)) => bad(format!("grid values must lie in [0, {K_MAX}]")),
            _ => Ok(()),
        }
    }

    fn grid_values(&self) -> Vec<Option<f64>> {
        match &self.k_distribution {
            KDistribution::Grid(g) => g.iter().map(|&k| Some(k)).collect(),
            _ => vec![None],
        }
    }
}

/// Maps observations to actions during evaluation.
pub trait Controller: Sync {
    fn act(&self, obs: &Observation, rng: &mut Rng, scratch: &mut Scratch) -> Result<[f64; ACT_DIM], EvalError>;
}

#[derive(Debug, Default)]
pub struct Scratch {
    norm: Vec<f64>,
    acts: Activations,
}

/// Deterministic mean action of a trained agent with frozen normalizer.
pub struct MeanPolicy<'a> {
    pub agent: &'a Agent,
    pub ppo: &'a PpoConfig,
}

impl Controller for MeanPolicy<'_> {
    fn act(&self, obs: &Observation, _rng: &mut Rng, scratch: &mut Scratch) -> Result<[f64; ACT_DIM], EvalError> {
        self.agent.prepare_obs(obs.as_slice(), self.ppo, &mut scratch.norm);
        let mean = self.agent.policy.act_deterministic(&scratch.norm, &mut scratch.acts)?;
        let mut out = [0.0; ACT_DIM];
        out.copy_from_slice(&mean);
        Ok(out)
    }
}

/// Uniform random torques in `[-1, 1]`.
pub struct RandomPolicy;

impl Controller for RandomPolicy {
    fn act(&self, _obs: &Observation, rng: &mut Rng, _scratch: &mut Scratch) -> Result<[f64; ACT_DIM], EvalError> {
        Ok(std::array::from_fn(|_| rng.random_range(-1.0..=1.0)))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub seed: u64,
    pub trial: usize,
    pub k: f64,
    pub leg: usize,
    pub reward: f64,
    pub distance: f64,
    /// Accumulated per-step progress; equals `distance` up to rounding.
    pub progress: f64,
    pub length: usize,
    pub fell: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedSummary {
    pub seed: u64,
    pub mean_reward: f64,
    pub mean_distance: f64,
}

/// Cross-seed aggregate of one policy under one condition.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub policy: String,
    pub condition: String,
    pub mean_reward: f64,
    pub se_reward: f64,
    pub mean_distance: f64,
    pub se_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub k: f64,
    pub mean_reward: f64,
    pub se_reward: f64,
    pub mean_distance: f64,
    pub se_distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub policy: String,
    pub condition: EvalCondition,
    pub trials: Vec<TrialRecord>,
    pub per_seed: Vec<SeedSummary>,
    pub summary: Summary,
    /// One point per grid value for sweeps; empty otherwise.
    pub curve: Vec<CurvePoint>,
}

impl EvalReport {
    pub fn fall_rate(&self) -> f64 {
        self.trials.iter().filter(|t| t.fell).count() as f64 / self.trials.len() as f64
    }
}

/// Mean and standard error (sample std over `sqrt(n)`); zero error for one value.
pub fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Per-seed means, then mean and standard error across seeds.
pub fn summarize(policy: &str, condition: &str, trials: &[&TrialRecord], seeds: &[u64]) -> (Summary, Vec<SeedSummary>) {
    let per_seed: Vec<SeedSummary> = seeds
        .iter()
        .map(|&seed| {
            let mine: Vec<&&TrialRecord> = trials.iter().filter(|t| t.seed == seed).collect();
            let n = mine.len() as f64;
            SeedSummary {
                seed,
                mean_reward: mine.iter().map(|t| t.reward).sum::<f64>() / n,
                mean_distance: mine.iter().map(|t| t.distance).sum::<f64>() / n,
            }
        })
        .collect();
    let rewards: Vec<f64> = per_seed.iter().map(|s| s.mean_reward).collect();
    let distances: Vec<f64> = per_seed.iter().map(|s| s.mean_distance).collect();
    let (mean_reward, se_reward) = mean_and_se(&rewards);
    let (mean_distance, se_distance) = mean_and_se(&distances);
    (
        Summary {
            policy: policy.to_string(),
            condition: condition.to_string(),
            mean_reward,
            se_reward,
            mean_distance,
            se_distance,
        },
        per_seed,
    )
}

struct TrialPlan {
    seed: u64,
    trial: usize,
    rng_index: u32,
    grid_k: Option<f64>,
}

fn run_trial(controller: &dyn Controller, sim_cfg: &SimConfig, cond: &EvalCondition, plan: &TrialPlan) -> Result<TrialRecord, EvalError> {
    let mut rng = rng::stream(plan.seed, Purpose::Eval, plan.rng_index);
    let leg = sample_leg(&mut rng);
    let k = match (&cond.k_distribution, plan.grid_k) {
        (_, Some(k)) => k,
        (KDistribution::Fixed(k), None) => *k,
        (KDistribution::Uniform(lo, hi), None) => sample_k(&mut rng, *lo, *hi)?,
        (KDistribution::Grid(_), None) => unreachable!("grid trials carry their k"),
    };
    let reset_seed = rng.random::<u64>();
    let sim_err = |source| EvalError::Sim {
        seed: plan.seed,
        trial: plan.trial,
        source,
    };
    let mut sim = QuadSim::new(sim_cfg.clone()).map_err(sim_err)?;
    let mut obs = sim.reset(reset_seed, Some(FailureSpec::new(leg, k)?)).map_err(sim_err)?;
    let mut scratch = Scratch::default();
    let mut reward = 0.0;
    let mut fell = false;
    while !sim.is_done() {
        let action = controller.act(&obs, &mut rng, &mut scratch)?;
        let out = sim.step(&action).map_err(sim_err)?;
        reward += out.reward;
        fell = out.info.falling;
        obs = out.observation;
    }
    Ok(TrialRecord {
        seed: plan.seed,
        trial: plan.trial,
        k,
        leg,
        reward,
        distance: sim.body_state().torso_position[0] - sim.initial_x(),
        progress: sim.progress(),
        length: sim.step_count(),
        fell,
    })
}

/// Runs every trial of `condition` and aggregates the results.
///
/// Each trial owns the random stream `(seed, Eval, index)`, so results do not
/// depend on how trials are scheduled across threads.
pub fn evaluate(policy: &str, controller: &dyn Controller, sim_cfg: &SimConfig, condition: &EvalCondition) -> Result<EvalReport, EvalError> {
    condition.validate()?;
    let grid = condition.grid_values();
    let mut plans = Vec::new();
    for &seed in &condition.seeds {
        for (gi, &grid_k) in grid.iter().enumerate() {
            for trial in 0..condition.trials {
                let index = gi * condition.trials + trial;
                plans.push(TrialPlan {
                    seed,
                    trial: index,
                    rng_index: u32::try_from(index).map_err(|_| EvalError::Condition("too many trials".into()))?,
                    grid_k,
                });
            }
        }
    }
    let trials = plans
        .par_iter()
        .map(|p| run_trial(controller, sim_cfg, condition, p))
        .collect::<Result<Vec<_>, _>>()?;

    let all: Vec<&TrialRecord> = trials.iter().collect();
    let (summary, per_seed) = summarize(policy, &condition.name, &all, &condition.seeds);
    let curve = match &condition.k_distribution {
        KDistribution::Grid(values) => values
            .iter()
            .map(|&k| {
                let at_k: Vec<&TrialRecord> = trials.iter().filter(|t| t.k == k).collect();
                let (s, _) = summarize(policy, &condition.name, &at_k, &condition.seeds);
                CurvePoint {
                    k,
                    mean_reward: s.mean_reward,
                    se_reward: s.se_reward,
                    mean_distance: s.mean_distance,
                    se_distance: s.se_distance,
                }
            })
            .collect(),
        _ => Vec::new(),
    };
    Ok(EvalReport {
        policy: policy.to_string(),
        condition: condition.clone(),
        trials,
        per_seed,
        summary,
        curve,
    })
}
