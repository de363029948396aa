use std::io::{self, Write};

use crate::agent::UpdateDiagnostics;

/// One PPO iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateRecord {
    pub update_index: u64,
    /// Steps collected before this iteration started.
    pub start_steps: u64,
    /// Steps collected once it finished.
    pub env_steps: u64,
    pub episodes: usize,
    /// Mean undiscounted return of the episodes that finished in it.
    pub mean_return: Option<f64>,
    /// Interval new episodes were drawn from during the iteration.
    pub lower: f64,
    pub upper: f64,
    /// Threshold when the iteration began.
    pub start_g_threshold: f64,
    /// Threshold after this iteration's returns were fed back.
    pub g_threshold: f64,
    pub diagnostics: UpdateDiagnostics,
}

/// One completed training episode.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    /// Iteration in which the episode finished.
    pub update_index: u64,
    pub worker: usize,
    pub leg: usize,
    pub k: f64,
    pub lower: f64,
    pub upper: f64,
    pub episode_return: f64,
    pub length: usize,
    pub distance: f64,
    pub fell: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub updates: Vec<UpdateRecord>,
    pub episodes: Vec<EpisodeRecord>,
}

pub const UPDATE_HEADER: &str =
    "update_index,env_steps,episodes,mean_return,L,U,g_threshold,policy_loss,value_loss,entropy,approx_kl,clip_fraction,grad_norm";
pub const EPISODE_HEADER: &str = "update_index,worker,leg,k,L,U,return,length,distance,fell";
pub const SCHEDULE_HEADER: &str = "update_index,elapsed_steps,L,U,g_threshold";

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl UpdateRecord {
    pub fn write_csv_row<W: Write>(&self, out: &mut W) -> io::Result<()> {
        let d = &self.diagnostics;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.update_index,
            self.env_steps,
            self.episodes,
            opt(self.mean_return),
            self.lower,
            self.upper,
            self.g_threshold,
            d.policy_loss,
            d.value_loss,
            d.entropy,
            d.approx_kl,
            d.clip_fraction,
            d.grad_norm
        )
    }

    /// Row of the schedule trace: interval in force when the iteration began.
    pub fn write_schedule_row<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(
            out,
            "{},{},{},{},{}",
            self.update_index, self.start_steps, self.lower, self.upper, self.start_g_threshold
        )
    }
}

impl EpisodeRecord {
    pub fn write_csv_row<W: Write>(&self, out: &mut W) -> io::Result<()> {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            self.update_index,
            self.worker,
            self.leg,
            self.k,
            self.lower,
            self.upper,
            self.episode_return,
            self.length,
            self.distance,
            self.fell
        )
    }
}

impl RunLog {
    pub fn write_updates_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{UPDATE_HEADER}")?;
        for r in &self.updates {
            r.write_csv_row(&mut out)?;
        }
        Ok(())
    }

    pub fn write_episodes_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{EPISODE_HEADER}")?;
        for r in &self.episodes {
            r.write_csv_row(&mut out)?;
        }
        Ok(())
    }

    pub fn total_episodes(&self) -> usize {
        self.episodes.len()
    }
}
