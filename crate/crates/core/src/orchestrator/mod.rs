//! Training loop: curriculum interval, failure draw per episode, rollouts on
//! parallel workers, PPO update, curriculum feedback, checkpoints.

mod checkpoint;
mod config;
mod runlog;

use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::Rng as _;
use thiserror::Error;

use crate::agent::{compute_gae, ppo_update, Activations, Agent, AgentError, RolloutBatch, UpdateDiagnostics};
use crate::curriculum::{CurriculumError, CurriculumState};
use crate::failure::{sample_failure, FailureError};
use crate::kv::ConfigError;
use crate::quadsim::{QuadSim, SimError, ACT_DIM, OBS_DIM};
use crate::rng::{self, Purpose, Rng};

pub use checkpoint::{Checkpoint, CheckpointError, CHECKPOINT_VERSION};
pub use config::{TrainConfig, CONFIG_SECTIONS};
pub use runlog::{EpisodeRecord, RunLog, UpdateRecord, EPISODE_HEADER, SCHEDULE_HEADER, UPDATE_HEADER};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Curriculum(#[from] CurriculumError),
    #[error(transparent)]
    Failure(#[from] FailureError),
    #[error("worker {worker}: {source}")]
    Sim { worker: usize, source: SimError },
    #[error("worker {worker}: {source}")]
    Agent { worker: usize, source: AgentError },
    #[error("update {update}: {source}")]
    Update { update: u64, source: AgentError },
    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> TrainError + '_ {
    move |source| TrainError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// One rollout context: a simulator plus its private random streams.
#[derive(Debug, Clone)]
pub(crate) struct Worker {
    pub sim: QuadSim,
    pub failure_rng: Rng,
    pub policy_rng: Rng,
    pub reset_rng: Rng,
    pub episode_interval: (f64, f64),
    pub episode_return: f64,
    pub episode_length: usize,
    /// Discounted return feeding the reward scaler.
    pub running_return: f64,
}

impl Worker {
    fn new(cfg: &TrainConfig, index: usize) -> Result<Self, TrainError> {
        let sim = QuadSim::new(cfg.sim.clone()).map_err(|source| TrainError::Sim { worker: index, source })?;
        let id = index as u32;
        Ok(Self {
            sim,
            failure_rng: rng::stream(cfg.seed, Purpose::Failure, id),
            policy_rng: rng::stream(cfg.seed, Purpose::Policy, id),
            reset_rng: rng::stream(cfg.seed, Purpose::SimNoise, id),
            episode_interval: (1.0, 1.0),
            episode_return: 0.0,
            episode_length: 0,
            running_return: 0.0,
        })
    }
}

/// What one worker hands back at the end of an iteration.
#[derive(Debug, Default)]
struct Segment {
    obs: Vec<f64>,
    raw_obs: Vec<f64>,
    actions: Vec<f64>,
    log_probs: Vec<f64>,
    values: Vec<f64>,
    rewards: Vec<f64>,
    dones: Vec<bool>,
    return_samples: Vec<f64>,
    bootstrap_value: f64,
    episodes: Vec<EpisodeRecord>,
}

fn collect_segment(
    worker: &mut Worker,
    index: usize,
    agent: &Agent,
    cfg: &TrainConfig,
    interval: (f64, f64),
    update_index: u64,
) -> Result<Segment, TrainError> {
    let horizon = cfg.ppo.horizon;
    let mut seg = Segment {
        obs: Vec::with_capacity(horizon * OBS_DIM),
        raw_obs: Vec::with_capacity(horizon * OBS_DIM),
        actions: Vec::with_capacity(horizon * ACT_DIM),
        ..Segment::default()
    };
    let sim_err = |source| TrainError::Sim { worker: index, source };
    let agent_err = |source| TrainError::Agent { worker: index, source };
    let mut acts = Activations::default();
    let mut norm = Vec::with_capacity(OBS_DIM);
    for _ in 0..horizon {
        if worker.sim.is_done() {
            let failure = sample_failure(&mut worker.failure_rng, interval.0, interval.1)?;
            let seed = worker.reset_rng.random::<u64>();
            worker.sim.reset(seed, Some(failure)).map_err(sim_err)?;
            worker.episode_interval = interval;
            worker.episode_return = 0.0;
            worker.episode_length = 0;
        }
        let obs = worker.sim.observe();
        agent.prepare_obs(obs.as_slice(), &cfg.ppo, &mut norm);
        let out = agent.policy.act_with(&norm, &mut worker.policy_rng, &mut acts).map_err(agent_err)?;
        let step = worker.sim.step(&out.action).map_err(sim_err)?;

        seg.raw_obs.extend_from_slice(obs.as_slice());
        seg.obs.extend_from_slice(&norm);
        seg.actions.extend_from_slice(&out.raw_action);
        seg.log_probs.push(out.log_prob);
        seg.values.push(out.value);
        seg.rewards.push(step.reward);
        seg.dones.push(step.done);
        seg.return_samples
            .push(agent.reward_scaler.accumulate(&mut worker.running_return, step.reward, step.done));

        worker.episode_return += step.reward;
        worker.episode_length += 1;
        if step.done {
            let failure = worker.sim.failure().expect("episodes always carry a failure");
            seg.episodes.push(EpisodeRecord {
                update_index,
                worker: index,
                leg: failure.leg,
                k: failure.k,
                lower: worker.episode_interval.0,
                upper: worker.episode_interval.1,
                episode_return: worker.episode_return,
                length: worker.episode_length,
                distance: worker.sim.body_state().torso_position[0] - worker.sim.initial_x(),
                fell: step.info.falling,
            });
        }
    }
    if !worker.sim.is_done() {
        agent.prepare_obs(worker.sim.observe().as_slice(), &cfg.ppo, &mut norm);
        seg.bootstrap_value = agent.policy.value(&norm);
    }
    Ok(seg)
}

/// Mean undiscounted return of `episodes` random-policy episodes drawn from
/// the curriculum's starting interval.
pub fn warmup_threshold(cfg: &TrainConfig, interval: (f64, f64), episodes: usize) -> Result<f64, TrainError> {
    let mut sim = QuadSim::new(cfg.sim.clone()).map_err(|source| TrainError::Sim { worker: 0, source })?;
    let mut rng = rng::stream(cfg.seed, Purpose::Warmup, 0);
    let mut total = 0.0;
    let mut action = [0.0; ACT_DIM];
    for _ in 0..episodes {
        let failure = sample_failure(&mut rng, interval.0, interval.1)?;
        let seed = rng.random::<u64>();
        sim.reset(seed, Some(failure)).map_err(|source| TrainError::Sim { worker: 0, source })?;
        while !sim.is_done() {
            for a in &mut action {
                *a = rng.random_range(-1.0..=1.0);
            }
            total += sim.step(&action).map_err(|source| TrainError::Sim { worker: 0, source })?.reward;
        }
    }
    Ok(total / episodes.max(1) as f64)
}

#[derive(Debug, Clone)]
pub struct Trainer {
    cfg: TrainConfig,
    agent: Agent,
    curriculum: CurriculumState,
    workers: Vec<Worker>,
    minibatch_rng: Rng,
    update_index: u64,
    elapsed_steps: u64,
    log: RunLog,
}

impl Trainer {
    pub fn new(cfg: TrainConfig) -> Result<Self, TrainError> {
        cfg.validate()?;
        let mut init_rng = rng::stream(cfg.seed, Purpose::Init, 0);
        let agent = Agent::new(OBS_DIM, ACT_DIM, &cfg.ppo, &mut init_rng);
        let mut curriculum = CurriculumState::new(&cfg.curriculum, cfg.total_env_steps, 0.0)?;
        curriculum.g_threshold = match cfg.curriculum.initial_threshold {
            Some(g) => g,
            None if cfg.mode().is_adaptive() => {
                warmup_threshold(&cfg, curriculum.current_interval(), cfg.curriculum.warmup_episodes)?
            }
            None => 0.0,
        };
        let workers = (0..cfg.num_workers).map(|i| Worker::new(&cfg, i)).collect::<Result<_, _>>()?;
        Ok(Self {
            minibatch_rng: rng::stream(cfg.seed, Purpose::Minibatch, 0),
            cfg,
            agent,
            curriculum,
            workers,
            update_index: 0,
            elapsed_steps: 0,
            log: RunLog::default(),
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn agent(&self) -> &Agent {
        &self.agent
    }

    pub fn curriculum(&self) -> &CurriculumState {
        &self.curriculum
    }

    /// Records produced by this trainer instance (a resumed trainer starts empty).
    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn into_parts(self) -> (Agent, RunLog) {
        (self.agent, self.log)
    }

    pub fn elapsed_steps(&self) -> u64 {
        self.elapsed_steps
    }

    pub fn update_index(&self) -> u64 {
        self.update_index
    }

    pub fn is_finished(&self) -> bool {
        self.elapsed_steps >= self.cfg.total_env_steps
    }

    /// Collects one horizon per worker, updates the networks and feeds
    /// finished episodes to the curriculum.
    pub fn iterate(&mut self) -> Result<&UpdateRecord, TrainError> {
        let interval = self.curriculum.current_interval();
        let start_g_threshold = self.curriculum.g_threshold;
        let start_steps = self.elapsed_steps;
        let update_index = self.update_index;
        let agent = &self.agent;
        let cfg = &self.cfg;
        let segments: Vec<Result<Segment, TrainError>> = if self.workers.len() == 1 {
            vec![collect_segment(&mut self.workers[0], 0, agent, cfg, interval, update_index)]
        } else {
            std::thread::scope(|scope| {
                let handles: Vec<_> = self
                    .workers
                    .iter_mut()
                    .enumerate()
                    .map(|(i, w)| scope.spawn(move || collect_segment(w, i, agent, cfg, interval, update_index)))
                    .collect();
                handles.into_iter().map(|h| h.join().expect("rollout worker panicked")).collect()
            })
        };
        let segments = segments.into_iter().collect::<Result<Vec<_>, _>>()?;

        // statistics are merged in worker order so thread timing never matters
        if self.cfg.ppo.normalize_obs {
            for seg in &segments {
                self.agent.obs_norm.stats.update(seg.raw_obs.chunks_exact(OBS_DIM));
            }
        }
        if self.cfg.ppo.scale_rewards {
            for seg in &segments {
                self.agent.reward_scaler.stats.update(seg.return_samples.chunks_exact(1));
            }
        }
        let scale = if self.cfg.ppo.scale_rewards {
            self.agent.reward_scaler.scale()
        } else {
            1.0
        };
        let mut batch = RolloutBatch::new(OBS_DIM, ACT_DIM);
        for seg in &segments {
            let rewards: Vec<f64> = seg.rewards.iter().map(|r| r / scale).collect();
            let (adv, ret) = compute_gae(
                &rewards,
                &seg.values,
                &seg.dones,
                seg.bootstrap_value,
                self.cfg.ppo.gamma,
                self.cfg.ppo.gae_lambda,
            );
            batch.obs.extend_from_slice(&seg.obs);
            batch.actions.extend_from_slice(&seg.actions);
            batch.log_probs.extend_from_slice(&seg.log_probs);
            batch.values.extend_from_slice(&seg.values);
            batch.advantages.extend(adv);
            batch.returns.extend(ret);
        }
        let diagnostics: UpdateDiagnostics =
            ppo_update(&mut self.agent.policy, &mut self.agent.adam, &batch, &self.cfg.ppo, &mut self.minibatch_rng)
                .map_err(|source| TrainError::Update {
                    update: update_index,
                    source,
                })?;

        let mut episodes = 0;
        let mut return_sum = 0.0;
        for seg in segments {
            for ep in seg.episodes {
                self.curriculum.record_return(ep.episode_return)?;
                episodes += 1;
                return_sum += ep.episode_return;
                self.log.episodes.push(ep);
            }
        }
        self.elapsed_steps += self.cfg.steps_per_iteration();
        self.curriculum.set_elapsed_steps(self.elapsed_steps);
        self.update_index += 1;
        self.log.updates.push(UpdateRecord {
            update_index,
            start_steps,
            env_steps: self.elapsed_steps,
            episodes,
            mean_return: (episodes > 0).then(|| return_sum / episodes as f64),
            lower: interval.0,
            upper: interval.1,
            start_g_threshold,
            g_threshold: self.curriculum.g_threshold,
            diagnostics,
        });
        Ok(self.log.updates.last().unwrap())
    }

    /// Trains to the step budget, streaming logs and checkpoints to the
    /// output directory when one is configured. `on_update` sees every record.
    pub fn run(&mut self, mut on_update: impl FnMut(&UpdateRecord)) -> Result<(), TrainError> {
        let mut files = match &self.cfg.output_dir {
            Some(dir) => Some(RunFiles::open(dir, self.update_index)?),
            None => None,
        };
        while !self.is_finished() {
            let before = self.elapsed_steps;
            let record = self.iterate()?.clone();
            if let Some(files) = &mut files {
                let new_episodes = &self.log.episodes[self.log.episodes.len() - record.episodes..];
                files.append(&record, new_episodes)?;
                let every = self.cfg.checkpoint_every;
                if every > 0 && self.elapsed_steps / every > before / every && !self.is_finished() {
                    let path = files.dir.join("checkpoints").join(format!("step_{:010}.ckpt", self.elapsed_steps));
                    self.checkpoint().save(&path)?;
                }
            }
            on_update(&record);
        }
        if let Some(files) = &mut files {
            files.flush()?;
            self.checkpoint().save(&files.dir.join("checkpoints").join("final.ckpt"))?;
        }
        Ok(())
    }
}

/// Streams the three per-run CSV files.
struct RunFiles {
    dir: PathBuf,
    updates: BufWriter<File>,
    episodes: BufWriter<File>,
    schedule: BufWriter<File>,
}

impl RunFiles {
    /// Opens the logs, keeping only rows from updates before `keep_updates`
    /// so a resumed run continues where its checkpoint left off.
    fn open(dir: &Path, keep_updates: u64) -> Result<Self, TrainError> {
        fs::create_dir_all(dir.join("checkpoints")).map_err(io_err(dir))?;
        let open = |name: &str, header: &str| -> Result<BufWriter<File>, TrainError> {
            let path = dir.join(name);
            let kept = if keep_updates > 0 { truncated_rows(&path, keep_updates)? } else { Vec::new() };
            let file = File::create(&path).map_err(io_err(&path))?;
            let mut w = BufWriter::new(file);
            writeln!(w, "{header}").map_err(io_err(&path))?;
            for row in kept {
                writeln!(w, "{row}").map_err(io_err(&path))?;
            }
            Ok(w)
        };
        Ok(Self {
            updates: open("runlog.csv", UPDATE_HEADER)?,
            episodes: open("episodes.csv", EPISODE_HEADER)?,
            schedule: open("schedule.csv", SCHEDULE_HEADER)?,
            dir: dir.to_path_buf(),
        })
    }

    fn append(&mut self, record: &UpdateRecord, episodes: &[EpisodeRecord]) -> Result<(), TrainError> {
        let dir = self.dir.clone();
        record.write_csv_row(&mut self.updates).map_err(io_err(&dir))?;
        record.write_schedule_row(&mut self.schedule).map_err(io_err(&dir))?;
        for ep in episodes {
            ep.write_csv_row(&mut self.episodes).map_err(io_err(&dir))?;
        }
        Ok(())
    }

    fn flush(&mut self) -> Result<(), TrainError> {
        let dir = self.dir.clone();
        for w in [&mut self.updates, &mut self.episodes, &mut self.schedule] {
            w.flush().map_err(io_err(&dir))?;
        }
        Ok(())
    }
}

/// Data rows of an existing log whose leading update index is below `keep`.
fn truncated_rows(path: &Path, keep: u64) -> Result<Vec<String>, TrainError> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(io_err(path)(e)),
    };
    Ok(text
        .lines()
        .skip(1)
        .filter(|row| {
            row.split(',')
                .next()
                .and_then(|v| v.parse::<u64>().ok())
                .is_some_and(|u| u < keep)
        })
        .map(str::to_string)
        .collect())
}

/// Trains from scratch and returns the final agent with its log.
pub fn train(cfg: TrainConfig) -> Result<(Agent, RunLog), TrainError> {
    let mut trainer = Trainer::new(cfg)?;
    trainer.run(|_| {})?;
    Ok(trainer.into_parts())
}
