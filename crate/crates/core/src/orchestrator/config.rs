use std::path::PathBuf;

use crate::agent::PpoConfig;
use crate::curriculum::{CurriculumConfig, CurriculumMode};
use crate::kv::{ConfigError, KvDoc, KvSection};
use crate::quadsim::SimConfig;

pub const CONFIG_SECTIONS: [&str; 4] = ["train", "sim", "ppo", "curriculum"];

/// Everything that determines a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub total_env_steps: u64,
    pub seed: u64,
    pub num_workers: usize,
    /// Write a checkpoint whenever this many further steps have elapsed;
    /// 0 keeps only the final checkpoint.
    pub checkpoint_every: u64,
    /// `None` keeps the run in memory only.
    pub output_dir: Option<PathBuf>,
    pub sim: SimConfig,
    pub ppo: PpoConfig,
    pub curriculum: CurriculumConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            total_env_steps: 300_000,
            seed: 0,
            num_workers: 1,
            checkpoint_every: 50_000,
            output_dir: None,
            sim: SimConfig::default(),
            ppo: PpoConfig::default(),
            curriculum: CurriculumConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn with_mode(mode: CurriculumMode) -> Self {
        let mut cfg = Self::default();
        cfg.curriculum.mode = mode;
        cfg
    }

    pub fn mode(&self) -> CurriculumMode {
        self.curriculum.mode
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sim.validate()?;
        self.ppo.validate()?;
        self.curriculum.validate()?;
        if self.num_workers == 0 {
            return Err(ConfigError::Invalid("num_workers must be at least 1".into()));
        }
        if self.total_env_steps < self.ppo.horizon as u64 {
            return Err(ConfigError::Invalid(format!(
                "total_env_steps {} is below the rollout horizon {}",
                self.total_env_steps, self.ppo.horizon
            )));
        }
        if self.mode().is_linear() && self.total_env_steps < self.curriculum.lcdr_stages as u64 {
            return Err(ConfigError::Invalid("total_env_steps must cover every linear stage".into()));
        }
        Ok(())
    }

    pub fn apply_train_section(&mut self, section: &KvSection) -> Result<(), ConfigError> {
        for (key, value) in section.entries() {
            match key {
                "total_env_steps" => self.total_env_steps = section.parse_value(key, value)?,
                "seed" => self.seed = section.parse_value(key, value)?,
                "num_workers" => self.num_workers = section.parse_value(key, value)?,
                "checkpoint_every" => self.checkpoint_every = section.parse_value(key, value)?,
                "output_dir" => {
                    self.output_dir = match value {
                        "" | "none" => None,
                        v => Some(PathBuf::from(v)),
                    }
                }
                _ => return Err(section.unknown(key)),
            }
        }
        Ok(())
    }

    /// Overlays every section present in `doc`; absent keys keep their values.
    pub fn apply_doc(&mut self, doc: &KvDoc) -> Result<(), ConfigError> {
        if let Some(s) = doc.section("train") {
            self.apply_train_section(s)?;
        }
        if let Some(s) = doc.section("sim") {
            self.sim.apply_section(s)?;
        }
        if let Some(s) = doc.section("ppo") {
            self.ppo.apply_section(s)?;
        }
        if let Some(s) = doc.section("curriculum") {
            self.curriculum.apply_section(s)?;
        }
        self.validate()
    }

    pub fn to_doc(&self) -> KvDoc {
        let mut doc = KvDoc::default();
        let mut train = KvSection::new("train");
        train.set("total_env_steps", self.total_env_steps);
        train.set("seed", self.seed);
        train.set("num_workers", self.num_workers);
        train.set("checkpoint_every", self.checkpoint_every);
        match &self.output_dir {
            Some(p) => train.set("output_dir", p.display()),
            None => train.set("output_dir", "none"),
        }
        doc.push_section(train);
        doc.push_section(self.sim.to_section());
        doc.push_section(self.ppo.to_section());
        doc.push_section(self.curriculum.to_section());
        doc
    }

    /// Steps gathered by one iteration across all workers.
    pub fn steps_per_iteration(&self) -> u64 {
        (self.ppo.horizon * self.num_workers) as u64
    }
}
