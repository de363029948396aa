//! Plain-text checkpoints.
//!
//! A checkpoint is a sectioned key-value document: the run's full config
//! under its usual section names, followed by `state.*` sections holding the
//! networks, optimizer moments, normalizer statistics, curriculum state,
//! random-stream positions and every worker's in-flight episode. Floats are
//! written in shortest round-trip form, so loading and saving again
//! reproduces the file byte for byte.

use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use super::{TrainConfig, Trainer, Worker, CONFIG_SECTIONS};
use crate::agent::{Adam, Agent, Mlp, ObsNormalizer, Policy, RewardScaler, RunningStats};
use crate::curriculum::{CurriculumMode, CurriculumState};
use crate::failure::FailureSpec;
use crate::kv::{ConfigError, KvDoc, KvSection};
use crate::quadsim::model::NUM_CONTACTS;
use crate::quadsim::{BodyState, QuadSim, SimSnapshot};
use crate::rng::RngState;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Format(#[from] ConfigError),
    #[error("missing [{section}] {key}")]
    Missing { section: String, key: String },
    #[error("[{section}] {key}: {msg}")]
    Invalid { section: String, key: String, msg: String },
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
}

/// Per-worker state carried across a save.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkerState {
    pub sim: SimSnapshot,
    pub failure_rng: RngState,
    pub policy_rng: RngState,
    pub reset_rng: RngState,
    pub episode_interval: (f64, f64),
    pub episode_return: f64,
    pub episode_length: usize,
    pub running_return: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub agent: Agent,
    pub curriculum: CurriculumState,
    pub workers: Vec<WorkerState>,
    pub minibatch_rng: RngState,
    pub update_index: u64,
    pub elapsed_steps: u64,
}

fn join<T: Display>(values: impl IntoIterator<Item = T>) -> String {
    values.into_iter().map(|v| v.to_string()).collect::<Vec<_>>().join(" ")
}

fn join_f64<'a>(values: impl IntoIterator<Item = &'a f64>) -> String {
    values.into_iter().map(|v| format!("{v:e}")).collect::<Vec<_>>().join(" ")
}

struct Reader<'a> {
    section: &'a KvSection,
}

impl<'a> Reader<'a> {
    fn of(doc: &'a KvDoc, name: &str) -> Result<Self, CheckpointError> {
        doc.section(name)
            .map(|section| Self { section })
            .ok_or_else(|| CheckpointError::Missing {
                section: name.to_string(),
                key: String::new(),
            })
    }

    fn raw(&self, key: &str) -> Result<&'a str, CheckpointError> {
        self.section.get(key).ok_or_else(|| CheckpointError::Missing {
            section: self.section.name.clone(),
            key: key.to_string(),
        })
    }

    fn invalid(&self, key: &str, msg: impl Into<String>) -> CheckpointError {
        CheckpointError::Invalid {
            section: self.section.name.clone(),
            key: key.to_string(),
            msg: msg.into(),
        }
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<T, CheckpointError> {
        let raw = self.raw(key)?;
        raw.parse().map_err(|_| self.invalid(key, format!("cannot parse {raw:?}")))
    }

    fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, CheckpointError> {
        self.raw(key)?
            .split_whitespace()
            .map(|v| v.parse().map_err(|_| self.invalid(key, format!("cannot parse {v:?}"))))
            .collect()
    }

    fn fixed<T: FromStr + Copy + Default, const N: usize>(&self, key: &str) -> Result<[T; N], CheckpointError> {
        let values: Vec<T> = self.list(key)?;
        if values.len() != N {
            return Err(self.invalid(key, format!("expected {N} values, got {}", values.len())));
        }
        let mut out = [T::default(); N];
        out.copy_from_slice(&values);
        Ok(out)
    }

    fn rng(&self, key: &str) -> Result<RngState, CheckpointError> {
        RngState::from_hex(self.raw(key)?).ok_or_else(|| self.invalid(key, "bad random-stream state"))
    }

    fn mlp(&self, prefix: &str) -> Result<Mlp, CheckpointError> {
        let dims: Vec<usize> = self.list(&format!("{prefix}_dims"))?;
        let params: Vec<f64> = self.list(&format!("{prefix}_params"))?;
        Mlp::from_parts(&dims, params).ok_or_else(|| self.invalid(prefix, "parameter count does not match widths"))
    }

    fn stats(&self, prefix: &str) -> Result<RunningStats, CheckpointError> {
        let stats = RunningStats {
            mean: self.list(&format!("{prefix}_mean"))?,
            var: self.list(&format!("{prefix}_var"))?,
            count: self.get(&format!("{prefix}_count"))?,
        };
        if stats.mean.len() != stats.var.len() {
            return Err(self.invalid(prefix, "mean and variance widths differ"));
        }
        Ok(stats)
    }
}

fn write_stats(s: &mut KvSection, prefix: &str, stats: &RunningStats) {
    s.set(format!("{prefix}_mean"), join_f64(&stats.mean));
    s.set(format!("{prefix}_var"), join_f64(&stats.var));
    s.set(format!("{prefix}_count"), format!("{:e}", stats.count));
}

fn agent_section(agent: &Agent) -> KvSection {
    let mut s = KvSection::new("state.agent");
    let p = &agent.policy;
    s.set("mean_dims", join(p.mean_net.dims()));
    s.set("mean_params", join_f64(&p.mean_net.params));
    s.set("log_std", join_f64(&p.log_std));
    s.set("value_dims", join(p.value_net.dims()));
    s.set("value_params", join_f64(&p.value_net.params));
    let a = &agent.adam;
    s.set("adam_learning_rate", format!("{:e}", a.learning_rate));
    s.set("adam_beta1", format!("{:e}", a.beta1));
    s.set("adam_beta2", format!("{:e}", a.beta2));
    s.set("adam_epsilon", format!("{:e}", a.epsilon));
    s.set("adam_steps", a.steps);
    s.set("adam_groups", a.moments.len());
    for (i, (m, v)) in a.moments.iter().enumerate() {
        s.set(format!("adam_m{i}"), join_f64(m));
        s.set(format!("adam_v{i}"), join_f64(v));
    }
    write_stats(&mut s, "obs", &agent.obs_norm.stats);
    s.set("obs_clip", format!("{:e}", agent.obs_norm.clip));
    write_stats(&mut s, "ret", &agent.reward_scaler.stats);
    s.set("ret_gamma", format!("{:e}", agent.reward_scaler.gamma));
    s
}

fn read_agent(doc: &KvDoc) -> Result<Agent, CheckpointError> {
    let r = Reader::of(doc, "state.agent")?;
    let policy = Policy {
        mean_net: r.mlp("mean")?,
        log_std: r.list("log_std")?,
        value_net: r.mlp("value")?,
    };
    if policy.log_std.len() != policy.mean_net.output_dim() {
        return Err(r.invalid("log_std", "width does not match the action dimension"));
    }
    let groups: usize = r.get("adam_groups")?;
    let moments = (0..groups)
        .map(|i| Ok((r.list(&format!("adam_m{i}"))?, r.list(&format!("adam_v{i}"))?)))
        .collect::<Result<Vec<_>, CheckpointError>>()?;
    let adam = Adam {
        learning_rate: r.get("adam_learning_rate")?,
        beta1: r.get("adam_beta1")?,
        beta2: r.get("adam_beta2")?,
        epsilon: r.get("adam_epsilon")?,
        steps: r.get("adam_steps")?,
        moments,
    };
    Ok(Agent {
        policy,
        adam,
        obs_norm: ObsNormalizer {
            stats: r.stats("obs")?,
            clip: r.get("obs_clip")?,
        },
        reward_scaler: RewardScaler {
            stats: r.stats("ret")?,
            gamma: r.get("ret_gamma")?,
        },
    })
}

fn curriculum_section(c: &CurriculumState) -> KvSection {
    let mut s = KvSection::new("state.curriculum");
    s.set("mode", c.mode);
    s.set("lower", format!("{:e}", c.lower));
    s.set("upper", format!("{:e}", c.upper));
    s.set("g_threshold", format!("{:e}", c.g_threshold));
    s.set("buffer", join_f64(&c.buffer));
    s.set("buffer_size", c.buffer_size);
    s.set("delta_lower", format!("{:e}", c.delta_lower));
    s.set("delta_upper", format!("{:e}", c.delta_upper));
    s.set("k_max", format!("{:e}", c.k_max));
    s.set("fixed_k", format!("{:e}", c.fixed_k));
    s.set("lcdr_stages", c.lcdr_stages);
    s.set("total_steps", c.total_steps);
    s.set("elapsed_steps", c.elapsed_steps);
    match c.train_clamp {
        Some((lo, hi)) => s.set("train_clamp", format!("{lo:e} {hi:e}")),
        None => s.set("train_clamp", "none"),
    }
    s.set("updates", c.updates);
    s
}

fn read_curriculum(doc: &KvDoc) -> Result<CurriculumState, CheckpointError> {
    let r = Reader::of(doc, "state.curriculum")?;
    let mode: CurriculumMode = r
        .raw("mode")?
        .parse()
        .map_err(|e: crate::curriculum::CurriculumError| r.invalid("mode", e.to_string()))?;
    let train_clamp = match r.raw("train_clamp")? {
        "none" => None,
        _ => {
            let [lo, hi] = r.fixed::<f64, 2>("train_clamp")?;
            Some((lo, hi))
        }
    };
    Ok(CurriculumState {
        mode,
        lower: r.get("lower")?,
        upper: r.get("upper")?,
        g_threshold: r.get("g_threshold")?,
        buffer: r.list("buffer")?,
        buffer_size: r.get("buffer_size")?,
        delta_lower: r.get("delta_lower")?,
        delta_upper: r.get("delta_upper")?,
        k_max: r.get("k_max")?,
        fixed_k: r.get("fixed_k")?,
        lcdr_stages: r.get("lcdr_stages")?,
        total_steps: r.get("total_steps")?,
        elapsed_steps: r.get("elapsed_steps")?,
        train_clamp,
        updates: r.get("updates")?,
    })
}

fn worker_section(index: usize, w: &WorkerState) -> KvSection {
    let mut s = KvSection::new(format!("state.worker.{index}"));
    let b = &w.sim.body;
    let mut body = vec![
        b.torso_position[0],
        b.torso_position[1],
        b.torso_pitch,
        b.torso_velocity[0],
        b.torso_velocity[1],
        b.torso_pitch_rate,
    ];
    body.extend_from_slice(&b.joint_angles);
    body.extend_from_slice(&b.joint_velocities);
    s.set("body", join_f64(&body));
    s.set(
        "anchors",
        join(w.sim.anchors.iter().map(|a| a.map_or_else(|| "none".to_string(), |v| format!("{v:e}")))),
    );
    s.set("feet_contact", join(w.sim.feet_contact.iter().map(|&c| u8::from(c))));
    s.set("step_count", w.sim.step_count);
    match w.sim.failure {
        Some(f) => s.set("failure", format!("{} {:e}", f.leg, f.k)),
        None => s.set("failure", "none"),
    }
    s.set("initial_x", format!("{:e}", w.sim.initial_x));
    s.set("progress", format!("{:e}", w.sim.progress));
    s.set("done", w.sim.done);
    s.set("failure_rng", w.failure_rng.to_hex());
    s.set("policy_rng", w.policy_rng.to_hex());
    s.set("reset_rng", w.reset_rng.to_hex());
    s.set("episode_interval", format!("{:e} {:e}", w.episode_interval.0, w.episode_interval.1));
    s.set("episode_return", format!("{:e}", w.episode_return));
    s.set("episode_length", w.episode_length);
    s.set("running_return", format!("{:e}", w.running_return));
    s
}

fn read_worker(doc: &KvDoc, index: usize) -> Result<WorkerState, CheckpointError> {
    let r = Reader::of(doc, &format!("state.worker.{index}"))?;
    let body: [f64; 22] = r.fixed("body")?;
    let mut joint_angles = [0.0; 8];
    let mut joint_velocities = [0.0; 8];
    joint_angles.copy_from_slice(&body[6..14]);
    joint_velocities.copy_from_slice(&body[14..22]);
    let anchor_tokens: Vec<String> = r.list("anchors")?;
    if anchor_tokens.len() != NUM_CONTACTS {
        return Err(r.invalid("anchors", format!("expected {NUM_CONTACTS} values")));
    }
    let mut anchors = [None; NUM_CONTACTS];
    for (a, tok) in anchors.iter_mut().zip(&anchor_tokens) {
        *a = match tok.as_str() {
            "none" => None,
            v => Some(v.parse().map_err(|_| r.invalid("anchors", format!("cannot parse {v:?}")))?),
        };
    }
    let feet: [u8; 4] = r.fixed("feet_contact")?;
    let failure = match r.raw("failure")? {
        "none" => None,
        raw => {
            let (leg, k) = raw.split_once(' ').ok_or_else(|| r.invalid("failure", "expected `leg k`"))?;
            let leg = leg.parse().map_err(|_| r.invalid("failure", "bad leg"))?;
            let k = k.parse().map_err(|_| r.invalid("failure", "bad k"))?;
            Some(FailureSpec::new(leg, k).map_err(|e| r.invalid("failure", e.to_string()))?)
        }
    };
    let [lo, hi] = r.fixed::<f64, 2>("episode_interval")?;
    Ok(WorkerState {
        sim: SimSnapshot {
            body: BodyState {
                torso_position: [body[0], body[1]],
                torso_pitch: body[2],
                torso_velocity: [body[3], body[4]],
                torso_pitch_rate: body[5],
                joint_angles,
                joint_velocities,
            },
            anchors,
            feet_contact: feet.map(|f| f != 0),
            step_count: r.get("step_count")?,
            failure,
            initial_x: r.get("initial_x")?,
            progress: r.get("progress")?,
            done: r.get("done")?,
        },
        failure_rng: r.rng("failure_rng")?,
        policy_rng: r.rng("policy_rng")?,
        reset_rng: r.rng("reset_rng")?,
        episode_interval: (lo, hi),
        episode_return: r.get("episode_return")?,
        episode_length: r.get("episode_length")?,
        running_return: r.get("running_return")?,
    })
}

impl Checkpoint {
    pub fn to_doc(&self) -> KvDoc {
        let mut doc = KvDoc::default();
        let mut head = KvSection::new("checkpoint");
        head.set("version", CHECKPOINT_VERSION);
        head.set("update_index", self.update_index);
        head.set("elapsed_steps", self.elapsed_steps);
        head.set("workers", self.workers.len());
        head.set("minibatch_rng", self.minibatch_rng.to_hex());
        doc.push_section(head);
        for section in self.config.to_doc().sections() {
            doc.push_section(section.clone());
        }
        doc.push_section(agent_section(&self.agent));
        doc.push_section(curriculum_section(&self.curriculum));
        for (i, w) in self.workers.iter().enumerate() {
            doc.push_section(worker_section(i, w));
        }
        doc
    }

    pub fn from_doc(doc: &KvDoc) -> Result<Self, CheckpointError> {
        let head = Reader::of(doc, "checkpoint")?;
        let version: u32 = head.get("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(version));
        }
        let mut config_doc = KvDoc::default();
        for name in CONFIG_SECTIONS {
            if let Some(s) = doc.section(name) {
                config_doc.push_section(s.clone());
            }
        }
        let mut config = TrainConfig::default();
        config.apply_doc(&config_doc)?;
        let workers: usize = head.get("workers")?;
        if workers != config.num_workers {
            return Err(head.invalid("workers", "does not match num_workers"));
        }
        Ok(Self {
            agent: read_agent(doc)?,
            curriculum: read_curriculum(doc)?,
            workers: (0..workers).map(|i| read_worker(doc, i)).collect::<Result<_, _>>()?,
            minibatch_rng: head.rng("minibatch_rng")?,
            update_index: head.get("update_index")?,
            elapsed_steps: head.get("elapsed_steps")?,
            config,
        })
    }

    pub fn to_text(&self) -> String {
        self.to_doc().to_string()
    }

    pub fn parse(text: &str) -> Result<Self, CheckpointError> {
        Self::from_doc(&KvDoc::parse(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let io = |source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(io)?;
        }
        // write-then-rename so an interrupted save never clobbers a good file
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_text()).map_err(io)?;
        fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let text = fs::read_to_string(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }
}

impl Trainer {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            agent: self.agent.clone(),
            curriculum: self.curriculum.clone(),
            workers: self
                .workers
                .iter()
                .map(|w| WorkerState {
                    sim: w.sim.snapshot(),
                    failure_rng: RngState::capture(&w.failure_rng),
                    policy_rng: RngState::capture(&w.policy_rng),
                    reset_rng: RngState::capture(&w.reset_rng),
                    episode_interval: w.episode_interval,
                    episode_return: w.episode_return,
                    episode_length: w.episode_length,
                    running_return: w.running_return,
                })
                .collect(),
            minibatch_rng: RngState::capture(&self.minibatch_rng),
            update_index: self.update_index,
            elapsed_steps: self.elapsed_steps,
        }
    }

    /// Continues a run exactly where `ckpt` left off. The log of the new
    /// trainer holds only the iterations it runs itself.
    pub fn from_checkpoint(ckpt: Checkpoint) -> Result<Self, super::TrainError> {
        ckpt.config.validate()?;
        let workers = ckpt
            .workers
            .iter()
            .enumerate()
            .map(|(i, ws)| {
                let mut sim =
                    QuadSim::new(ckpt.config.sim.clone()).map_err(|source| super::TrainError::Sim { worker: i, source })?;
                sim.restore(&ws.sim);
                Ok(Worker {
                    sim,
                    failure_rng: ws.failure_rng.restore(),
                    policy_rng: ws.policy_rng.restore(),
                    reset_rng: ws.reset_rng.restore(),
                    episode_interval: ws.episode_interval,
                    episode_return: ws.episode_return,
                    episode_length: ws.episode_length,
                    running_return: ws.running_return,
                })
            })
            .collect::<Result<_, super::TrainError>>()?;
        Ok(Self {
            cfg: ckpt.config,
            agent: ckpt.agent,
            curriculum: ckpt.curriculum,
            workers,
            minibatch_rng: ckpt.minibatch_rng.restore(),
            update_index: ckpt.update_index,
            elapsed_steps: ckpt.elapsed_steps,
            log: super::RunLog::default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::curriculum::CurriculumMode;

    fn small_config() -> TrainConfig {
        let mut cfg = TrainConfig::with_mode(CurriculumMode::AcdrHardToEasy);
        cfg.total_env_steps = 512;
        cfg.ppo.horizon = 64;
        cfg.num_workers = 2;
        cfg.curriculum.initial_threshold = Some(-1e9);
        cfg.curriculum.buffer_size = 1;
        cfg.sim.horizon = 40;
        cfg
    }

    #[test]
    fn save_load_save_is_byte_stable() {
        let mut trainer = Trainer::new(small_config()).unwrap();
        trainer.iterate().unwrap();
        trainer.iterate().unwrap();
        let text = trainer.checkpoint().to_text();
        let back = Checkpoint::parse(&text).unwrap();
        assert_eq!(back, trainer.checkpoint());
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn rejects_wrong_version_and_truncation() {
        let trainer = Trainer::new(small_config()).unwrap();
        let text = trainer.checkpoint().to_text();
        let bumped = text.replacen("version = 1", "version = 9", 1);
        assert!(matches!(Checkpoint::parse(&bumped), Err(CheckpointError::Version(9))));
        let cut = &text[..text.find("[state.worker.1]").unwrap()];
        assert!(Checkpoint::parse(cut).is_err());
    }
}
