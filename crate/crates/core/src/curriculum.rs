//! Schedulers for the failure-coefficient interval `[L, U]`.
//!
//! * `acdr_e2h` / `acdr_h2e`: adaptive. Completed-episode returns are
//!   buffered; every `m` returns their mean is compared against a ratcheting
//!   threshold and, when it is reached, the interval steps down (easy to
//!   hard, starting at `[k_max, k_max]`) or up (hard to easy, starting at
//!   `[0, 0]`).
//! * `lcdr_e2h` / `lcdr_h2e`: the same two directions on a fixed timetable
//!   of `N` equal stages over the training budget.
//! * `udr`: `Uni(0, k_max)` throughout.
//! * `fixed`: a single coefficient throughout.
//! * `baseline`: nominal actuators (`k = 1`) throughout.
//!
//! An optional training clamp `[k_lo, k_hi]` restricts every mode.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::failure::K_MAX;
use crate::kv::{ConfigError, KvSection};

#[derive(Debug, Error, PartialEq)]
pub enum CurriculumError {
    #[error("linear schedule needs at least 2 stages, got {0}")]
    TooFewStages(usize),
    #[error("linear schedule needs total steps >= stages ({stages}), got {total}")]
    BudgetTooSmall { total: u64, stages: usize },
    #[error("episode return {0} is not finite")]
    NonFiniteReturn(f64),
    #[error("invalid clamp [{0}, {1}]")]
    InvalidClamp(f64, f64),
    #[error("unknown curriculum mode {0:?}")]
    UnknownMode(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CurriculumMode {
    AcdrEasyToHard,
    AcdrHardToEasy,
    LcdrEasyToHard,
    LcdrHardToEasy,
    Udr,
    Fixed,
    Baseline,
}

impl CurriculumMode {
    pub const ALL: [CurriculumMode; 7] = [
        Self::AcdrEasyToHard,
        Self::AcdrHardToEasy,
        Self::LcdrEasyToHard,
        Self::LcdrHardToEasy,
        Self::Udr,
        Self::Fixed,
        Self::Baseline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::AcdrEasyToHard => "acdr_e2h",
            Self::AcdrHardToEasy => "acdr_h2e",
            Self::LcdrEasyToHard => "lcdr_e2h",
            Self::LcdrHardToEasy => "lcdr_h2e",
            Self::Udr => "udr",
            Self::Fixed => "fixed",
            Self::Baseline => "baseline",
        }
    }

    pub fn is_adaptive(self) -> bool {
        matches!(self, Self::AcdrEasyToHard | Self::AcdrHardToEasy)
    }

    pub fn is_linear(self) -> bool {
        matches!(self, Self::LcdrEasyToHard | Self::LcdrHardToEasy)
    }
}

impl fmt::Display for CurriculumMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CurriculumMode {
    type Err = CurriculumError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| CurriculumError::UnknownMode(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    EasyToHard,
    HardToEasy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumConfig {
    pub mode: CurriculumMode,
    /// Number of buffered returns that triggers an adaptive evaluation.
    pub buffer_size: usize,
    pub delta_lower: f64,
    pub delta_upper: f64,
    pub k_max: f64,
    pub fixed_k: f64,
    pub lcdr_stages: usize,
    /// Explicit starting threshold; `None` lets the trainer estimate it from
    /// a random-policy warmup.
    pub initial_threshold: Option<f64>,
    pub warmup_episodes: usize,
    pub train_clamp: Option<(f64, f64)>,
}

impl Default for CurriculumConfig {
    fn default() -> Self {
        Self {
            mode: CurriculumMode::AcdrHardToEasy,
            buffer_size: 10,
            delta_lower: 0.01,
            delta_upper: 0.01,
            k_max: K_MAX,
            fixed_k: 1.0,
            lcdr_stages: 11,
            initial_threshold: None,
            warmup_episodes: 20,
            train_clamp: None,
        }
    }
}

impl CurriculumConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.buffer_size == 0 {
            return bad("buffer_size must be at least 1".into());
        }
        if !(self.k_max > 0.0 && self.k_max <= K_MAX) {
            return bad(format!("k_max must lie in (0, {K_MAX}]"));
        }
        if !(self.delta_lower >= 0.0 && self.delta_upper >= 0.0) {
            return bad("interval steps must be non-negative".into());
        }
        if !(0.0..=self.k_max).contains(&self.fixed_k) {
            return bad(format!("fixed_k {} outside [0, k_max]", self.fixed_k));
        }
        if self.lcdr_stages < 2 {
            return bad("lcdr_stages must be at least 2".into());
        }
        if let Some(g) = self.initial_threshold {
            if !g.is_finite() {
                return bad("initial_threshold must be finite".into());
            }
        }
        if let Some((lo, hi)) = self.train_clamp {
            if !(0.0 <= lo && lo <= hi && hi <= self.k_max) {
                return bad(format!("train clamp [{lo}, {hi}] must lie inside [0, k_max]"));
            }
        }
        Ok(())
    }

    pub fn apply_section(&mut self, section: &KvSection) -> Result<(), ConfigError> {
        for (key, value) in section.entries() {
            match key {
                "mode" => self.mode = section.parse_value(key, value)?,
                "buffer_size" => self.buffer_size = section.parse_value(key, value)?,
                "delta_lower" => self.delta_lower = section.parse_value(key, value)?,
                "delta_upper" => self.delta_upper = section.parse_value(key, value)?,
                "k_max" => self.k_max = section.parse_value(key, value)?,
                "fixed_k" => self.fixed_k = section.parse_value(key, value)?,
                "lcdr_stages" => self.lcdr_stages = section.parse_value(key, value)?,
                "initial_threshold" => {
                    self.initial_threshold = match value {
                        "auto" => None,
                        v => Some(section.parse_value(key, v)?),
                    }
                }
                "warmup_episodes" => self.warmup_episodes = section.parse_value(key, value)?,
                "train_clamp" => self.train_clamp = parse_clamp(section, key, value)?,
                _ => return Err(section.unknown(key)),
            }
        }
        self.validate()
    }

    pub fn to_section(&self) -> KvSection {
        let mut s = KvSection::new("curriculum");
        s.set("mode", self.mode);
        s.set("buffer_size", self.buffer_size);
        s.set("delta_lower", self.delta_lower);
        s.set("delta_upper", self.delta_upper);
        s.set("k_max", self.k_max);
        s.set("fixed_k", self.fixed_k);
        s.set("lcdr_stages", self.lcdr_stages);
        match self.initial_threshold {
            Some(g) => s.set("initial_threshold", g),
            None => s.set("initial_threshold", "auto"),
        }
        s.set("warmup_episodes", self.warmup_episodes);
        match self.train_clamp {
            Some((lo, hi)) => s.set("train_clamp", format!("{lo},{hi}")),
            None => s.set("train_clamp", "none"),
        }
        s
    }
}

/// Parses `none` or `lo,hi`.
pub fn parse_clamp(section: &KvSection, key: &str, value: &str) -> Result<Option<(f64, f64)>, ConfigError> {
    if value == "none" {
        return Ok(None);
    }
    let (lo, hi) = value.split_once(',').ok_or_else(|| ConfigError::BadValue {
        section: section.name.clone(),
        key: key.to_string(),
        value: value.to_string(),
    })?;
    Ok(Some((section.parse_value(key, lo.trim())?, section.parse_value(key, hi.trim())?)))
}

/// Interval of the linear schedule after `elapsed` of `total` steps.
///
/// The budget is cut into stages of `floor(total / stages)` steps; stage `i`
/// (capped at `stages - 1`) sits at `i * k_max / (stages - 1)` for
/// hard-to-easy and at the mirror image for easy-to-hard.
pub fn lcdr_interval(elapsed: u64, total: u64, stages: usize, direction: Direction, k_max: f64) -> Result<(f64, f64), CurriculumError> {
    if stages < 2 {
        return Err(CurriculumError::TooFewStages(stages));
    }
    let stage_len = total / stages as u64;
    if stage_len == 0 {
        return Err(CurriculumError::BudgetTooSmall { total, stages });
    }
    let last = (stages - 1) as u64;
    let stage = (elapsed / stage_len).min(last);
    let steps_up = match direction {
        Direction::HardToEasy => stage,
        Direction::EasyToHard => last - stage,
    };
    // i * k_max / (N - 1) keeps the endpoints exact
    let k = k_max * steps_up as f64 / last as f64;
    Ok((k, k))
}

/// Result of feeding one return to the scheduler.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordOutcome {
    /// Mean of the buffer when it reached `m` entries.
    pub evaluated_mean: Option<f64>,
    pub interval_updated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurriculumState {
    pub mode: CurriculumMode,
    pub lower: f64,
    pub upper: f64,
    pub g_threshold: f64,
    pub buffer: Vec<f64>,
    pub buffer_size: usize,
    pub delta_lower: f64,
    pub delta_upper: f64,
    pub k_max: f64,
    pub fixed_k: f64,
    pub lcdr_stages: usize,
    pub total_steps: u64,
    pub elapsed_steps: u64,
    pub train_clamp: Option<(f64, f64)>,
    /// Number of adaptive interval moves so far.
    pub updates: u64,
}

impl CurriculumState {
    pub fn new(cfg: &CurriculumConfig, total_steps: u64, g_threshold: f64) -> Result<Self, CurriculumError> {
        if let Some((lo, hi)) = cfg.train_clamp {
            if !(0.0 <= lo && lo <= hi && hi <= cfg.k_max) {
                return Err(CurriculumError::InvalidClamp(lo, hi));
            }
        }
        if cfg.mode.is_linear() {
            lcdr_interval(0, total_steps, cfg.lcdr_stages, Direction::HardToEasy, cfg.k_max)?;
        }
        let mut state = Self {
            mode: cfg.mode,
            lower: 0.0,
            upper: 0.0,
            g_threshold,
            buffer: Vec::with_capacity(cfg.buffer_size),
            buffer_size: cfg.buffer_size,
            delta_lower: cfg.delta_lower,
            delta_upper: cfg.delta_upper,
            k_max: cfg.k_max,
            fixed_k: cfg.fixed_k,
            lcdr_stages: cfg.lcdr_stages,
            total_steps,
            elapsed_steps: 0,
            train_clamp: cfg.train_clamp,
            updates: 0,
        };
        let (lo, hi) = state.walk_bounds();
        let (l, u) = match cfg.mode {
            CurriculumMode::AcdrEasyToHard => (hi, hi),
            CurriculumMode::AcdrHardToEasy => (lo, lo),
            _ => state.scheduled_interval(),
        };
        state.lower = l;
        state.upper = u;
        Ok(state)
    }

    /// Range the adaptive walk moves in: `[0, k_max]`, narrowed by the clamp.
    fn walk_bounds(&self) -> (f64, f64) {
        match self.train_clamp {
            Some((lo, hi)) => (lo.max(0.0), hi.min(self.k_max)),
            None => (0.0, self.k_max),
        }
    }

    fn scheduled_interval(&self) -> (f64, f64) {
        match self.mode {
            CurriculumMode::AcdrEasyToHard | CurriculumMode::AcdrHardToEasy => (self.lower, self.upper),
            CurriculumMode::LcdrEasyToHard => self.lcdr(Direction::EasyToHard),
            CurriculumMode::LcdrHardToEasy => self.lcdr(Direction::HardToEasy),
            CurriculumMode::Udr => (0.0, self.k_max),
            CurriculumMode::Fixed => (self.fixed_k, self.fixed_k),
            CurriculumMode::Baseline => (1.0, 1.0),
        }
    }

    fn lcdr(&self, direction: Direction) -> (f64, f64) {
        // validated in `new`
        lcdr_interval(self.elapsed_steps.min(self.total_steps), self.total_steps, self.lcdr_stages, direction, self.k_max)
            .expect("linear schedule parameters validated at construction")
    }

    /// Interval episodes should currently draw `k` from.
    pub fn current_interval(&self) -> (f64, f64) {
        let (l, u) = self.scheduled_interval();
        match self.train_clamp {
            Some((lo, hi)) => (l.clamp(lo, hi), u.clamp(lo, hi)),
            None => (l, u),
        }
    }

    /// Advances the training clock used by the linear schedule.
    pub fn set_elapsed_steps(&mut self, steps: u64) {
        self.elapsed_steps = steps;
        if self.mode.is_linear() {
            let (l, u) = self.scheduled_interval();
            self.lower = l;
            self.upper = u;
        }
    }

    /// Feeds the undiscounted return of one completed episode.
    pub fn record_return(&mut self, g: f64) -> Result<RecordOutcome, CurriculumError> {
        if !g.is_finite() {
            return Err(CurriculumError::NonFiniteReturn(g));
        }
        let mut outcome = RecordOutcome {
            evaluated_mean: None,
            interval_updated: false,
        };
        if !self.mode.is_adaptive() {
            return Ok(outcome);
        }
        self.buffer.push(g);
        if self.buffer.len() >= self.buffer_size {
            let mean = self.buffer.iter().sum::<f64>() / self.buffer.len() as f64;
            outcome.evaluated_mean = Some(mean);
            if mean >= self.g_threshold {
                match self.mode {
                    CurriculumMode::AcdrEasyToHard => self.update_easy_to_hard(),
                    CurriculumMode::AcdrHardToEasy => self.update_hard_to_easy(),
                    _ => unreachable!("adaptive modes only"),
                }
                self.g_threshold = mean;
                self.updates += 1;
                outcome.interval_updated = true;
            }
            self.buffer.clear();
        }
        Ok(outcome)
    }

    pub fn update_easy_to_hard(&mut self) {
        let (lo, _) = self.walk_bounds();
        self.upper = (self.upper - self.delta_upper).max(lo);
        self.lower = (self.lower - self.delta_lower).max(lo).min(self.upper);
    }

    pub fn update_hard_to_easy(&mut self) {
        let (_, hi) = self.walk_bounds();
        self.lower = (self.lower + self.delta_lower).min(hi);
        self.upper = (self.upper + self.delta_upper).min(hi).max(self.lower);
    }
}

/// CSV of interval moves: `update_index,elapsed_steps,L,U,g_threshold`.
pub struct ScheduleTraceWriter<W: Write> {
    out: W,
    index: u64,
}

impl<W: Write> ScheduleTraceWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "update_index,elapsed_steps,L,U,g_threshold")?;
        Ok(Self { out, index: 0 })
    }

    pub fn record(&mut self, elapsed_steps: u64, interval: (f64, f64), g_threshold: f64) -> io::Result<()> {
        writeln!(self.out, "{},{elapsed_steps},{},{},{g_threshold}", self.index, interval.0, interval.1)?;
        self.index += 1;
        Ok(())
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

/// Writes the linear schedule as seen at each of the given step counts.
pub fn write_linear_trace<W: Write>(out: W, state: &CurriculumState, checkpoints: impl IntoIterator<Item = u64>) -> io::Result<W> {
    let mut state = state.clone();
    let mut writer = ScheduleTraceWriter::new(out)?;
    for steps in checkpoints {
        state.set_elapsed_steps(steps);
        writer.record(steps, state.current_interval(), state.g_threshold)?;
    }
    Ok(writer.into_inner())
}
