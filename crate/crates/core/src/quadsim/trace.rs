use std::io::{self, Write};

use super::QuadSim;

/// CSV dump of an episode: `t,torso_x,torso_z,pitch,reward,done`.
pub struct TrajectoryWriter<W: Write> {
    out: W,
}

impl<W: Write> TrajectoryWriter<W> {
    pub fn new(mut out: W) -> io::Result<Self> {
        writeln!(out, "t,torso_x,torso_z,pitch,reward,done")?;
        Ok(Self { out })
    }

    /// Records the simulator state right after a step.
    pub fn record(&mut self, sim: &QuadSim, reward: f64, done: bool) -> io::Result<()> {
        let body = sim.body_state();
        let t = sim.step_count() as f64 * sim.config().dt;
        writeln!(
            self.out,
            "{t},{},{},{},{reward},{}",
            body.torso_position[0],
            body.torso_position[1],
            body.torso_pitch,
            u8::from(done)
        )
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}
