use rand::Rng as _;

use super::config::SimConfig;
use super::model::{self, Anchors, GenVec, NDOF, NUM_CONTACTS, PITCH, X, Z};
use super::reward::{reward_terms, squared_norm};
use super::{Observation, SimError, StepInfo, StepOutcome, ACT_DIM, OBS_DIM};
use crate::failure::{FailureSpec, NUM_LEGS};
use crate::rng::{self, Purpose};

/// Torso pose and joint configuration of the robot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BodyState {
    /// `[x, z]`, z up.
    pub torso_position: [f64; 2],
    /// Counter-clockwise in the x-z plane; positive lifts the nose.
    pub torso_pitch: f64,
    pub torso_velocity: [f64; 2],
    pub torso_pitch_rate: f64,
    /// `[hip0, knee0, hip1, knee1, ...]`
    pub joint_angles: [f64; ACT_DIM],
    pub joint_velocities: [f64; ACT_DIM],
}

impl BodyState {
    pub fn from_generalized(q: &GenVec, qd: &GenVec) -> Self {
        let mut joint_angles = [0.0; ACT_DIM];
        let mut joint_velocities = [0.0; ACT_DIM];
        joint_angles.copy_from_slice(&q[3..]);
        joint_velocities.copy_from_slice(&qd[3..]);
        Self {
            torso_position: [q[X], q[Z]],
            torso_pitch: q[PITCH],
            torso_velocity: [qd[X], qd[Z]],
            torso_pitch_rate: qd[PITCH],
            joint_angles,
            joint_velocities,
        }
    }

    pub fn to_generalized(&self) -> (GenVec, GenVec) {
        let mut q = [0.0; NDOF];
        let mut qd = [0.0; NDOF];
        q[X] = self.torso_position[0];
        q[Z] = self.torso_position[1];
        q[PITCH] = self.torso_pitch;
        qd[X] = self.torso_velocity[0];
        qd[Z] = self.torso_velocity[1];
        qd[PITCH] = self.torso_pitch_rate;
        q[3..].copy_from_slice(&self.joint_angles);
        qd[3..].copy_from_slice(&self.joint_velocities);
        (q, qd)
    }

    pub fn is_finite(&self) -> bool {
        let (q, qd) = self.to_generalized();
        q.iter().chain(qd.iter()).all(|v| v.is_finite())
    }
}

/// Everything needed to continue an episode exactly where it left off.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSnapshot {
    pub body: BodyState,
    pub anchors: Anchors,
    pub feet_contact: [bool; NUM_LEGS],
    pub step_count: usize,
    pub failure: Option<FailureSpec>,
    pub initial_x: f64,
    pub progress: f64,
    pub done: bool,
}

/// One planar quadruped episode at a time.
#[derive(Debug, Clone)]
pub struct QuadSim {
    cfg: SimConfig,
    stand_pose: [f64; ACT_DIM],
    q: GenVec,
    qd: GenVec,
    anchors: Anchors,
    feet_contact: [bool; NUM_LEGS],
    step_count: usize,
    failure: Option<FailureSpec>,
    initial_x: f64,
    progress: f64,
    done: bool,
}

impl QuadSim {
    pub fn new(cfg: SimConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let mut stand_pose = [0.0; ACT_DIM];
        for leg in 0..NUM_LEGS {
            stand_pose[2 * leg] = cfg.stand_hip;
            stand_pose[2 * leg + 1] = cfg.stand_knee;
        }
        let mut sim = Self {
            cfg,
            stand_pose,
            q: [0.0; NDOF],
            qd: [0.0; NDOF],
            anchors: [None; NUM_CONTACTS],
            feet_contact: [false; NUM_LEGS],
            step_count: 0,
            failure: None,
            initial_x: 0.0,
            progress: 0.0,
            done: true,
        };
        sim.place_standing();
        Ok(sim)
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    fn place_standing(&mut self) {
        self.q = [0.0; NDOF];
        self.qd = [0.0; NDOF];
        self.q[Z] = self.cfg.standing_height();
        self.q[3..].copy_from_slice(&self.stand_pose);
        self.anchors = [None; NUM_CONTACTS];
        self.feet_contact = [false; NUM_LEGS];
    }

    /// Starts an episode from the standing pose with uniform joint-angle
    /// noise of amplitude `reset_noise`. `None` disables failure injection.
    pub fn reset(&mut self, seed: u64, failure: Option<FailureSpec>) -> Result<Observation, SimError> {
        if let Some(f) = &failure {
            f.validate()?;
        }
        self.place_standing();
        let amp = self.cfg.reset_noise;
        if amp > 0.0 {
            let mut rng = rng::stream(seed, Purpose::SimNoise, 0);
            for v in &mut self.q[3..] {
                *v += rng.random_range(-amp..=amp);
            }
        }
        self.step_count = 0;
        self.failure = failure;
        self.initial_x = self.q[X];
        self.progress = 0.0;
        self.done = false;
        Ok(self.observe())
    }

    /// Commanded torques after clamping and scaling, before failure.
    pub fn commanded_torques(&self, action: &[f64]) -> Result<[f64; ACT_DIM], SimError> {
        if action.len() != ACT_DIM {
            return Err(SimError::ActionWidth(action.len()));
        }
        if let Some(i) = action.iter().position(|a| !a.is_finite()) {
            return Err(SimError::NonFiniteAction(i));
        }
        let mut torques = [0.0; ACT_DIM];
        for (t, a) in torques.iter_mut().zip(action) {
            *t = a.clamp(-1.0, 1.0) * self.cfg.max_torque;
        }
        Ok(torques)
    }

    /// Torques that actually reach the joints.
    pub fn applied_torques(&self, action: &[f64]) -> Result<[f64; ACT_DIM], SimError> {
        let mut torques = self.commanded_torques(action)?;
        if let Some(f) = &self.failure {
            f.apply(&mut torques);
        }
        Ok(torques)
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepOutcome, SimError> {
        if self.done {
            return Err(SimError::EpisodeFinished);
        }
        let torques = self.applied_torques(action)?;
        let x_before = self.q[X];
        let mut impact = [0.0; NUM_CONTACTS];
        for _ in 0..self.cfg.substeps {
            let normals = model::substep(&self.cfg, &mut self.q, &mut self.qd, &mut self.anchors, &torques, &self.stand_pose);
            for (acc, f) in impact.iter_mut().zip(normals) {
                *acc += f;
            }
            for leg in 0..NUM_LEGS {
                self.feet_contact[leg] = normals[leg] > 0.0;
            }
        }
        let inv = 1.0 / self.cfg.substeps as f64;
        for f in &mut impact {
            *f *= inv;
        }
        if self.q.iter().chain(self.qd.iter()).any(|v| !v.is_finite()) {
            self.done = true;
            return Err(SimError::Diverged { step: self.step_count });
        }
        self.step_count += 1;

        let dx = self.q[X] - x_before;
        self.progress += dx;
        let v_fwd = dx / self.cfg.dt;
        let z = self.q[Z];
        let falling = z < self.cfg.healthy_z_min || z > self.cfg.healthy_z_max;
        let torque_sq = squared_norm(&torques);
        let contact_force_sq = squared_norm(&impact);
        let reward = reward_terms(self.cfg.reward_mode, v_fwd, torque_sq, contact_force_sq, falling).total();
        self.done = falling || self.step_count >= self.cfg.horizon;

        Ok(StepOutcome {
            observation: self.observe(),
            reward,
            done: self.done,
            info: StepInfo {
                v_fwd,
                torque_sq,
                contact_force_sq,
                falling,
                progress: self.progress,
            },
        })
    }

    pub fn observe(&self) -> Observation {
        let mut v = [0.0; OBS_DIM];
        v[..8].copy_from_slice(&self.q[3..]);
        v[8..16].copy_from_slice(&self.qd[3..]);
        v[16] = self.q[Z];
        v[17] = self.q[PITCH];
        v[18] = self.qd[X];
        v[19] = self.qd[Z];
        v[20] = self.qd[PITCH];
        for leg in 0..NUM_LEGS {
            v[21 + leg] = if self.feet_contact[leg] { 1.0 } else { 0.0 };
        }
        v[25] = self.step_count as f64 / self.cfg.horizon as f64;
        v[26] = 0.0;
        Observation { values: v }
    }

    pub fn body_state(&self) -> BodyState {
        BodyState::from_generalized(&self.q, &self.qd)
    }

    pub fn set_body_state(&mut self, body: &BodyState) {
        let (q, qd) = body.to_generalized();
        self.q = q;
        self.qd = qd;
        self.anchors = [None; NUM_CONTACTS];
    }

    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn failure(&self) -> Option<FailureSpec> {
        self.failure
    }

    /// Forward torso displacement accumulated step by step.
    pub fn progress(&self) -> f64 {
        self.progress
    }

    pub fn initial_x(&self) -> f64 {
        self.initial_x
    }

    pub fn mechanical_energy(&self) -> f64 {
        model::mechanical_energy(&self.cfg, &self.q, &self.qd, &self.anchors, &self.stand_pose)
    }

    pub fn snapshot(&self) -> SimSnapshot {
        SimSnapshot {
            body: self.body_state(),
            anchors: self.anchors,
            feet_contact: self.feet_contact,
            step_count: self.step_count,
            failure: self.failure,
            initial_x: self.initial_x,
            progress: self.progress,
            done: self.done,
        }
    }

    pub fn restore(&mut self, snap: &SimSnapshot) {
        let (q, qd) = snap.body.to_generalized();
        self.q = q;
        self.qd = qd;
        self.anchors = snap.anchors;
        self.feet_contact = snap.feet_contact;
        self.step_count = snap.step_count;
        self.failure = snap.failure;
        self.initial_x = snap.initial_x;
        self.progress = snap.progress;
        self.done = snap.done;
    }
}
