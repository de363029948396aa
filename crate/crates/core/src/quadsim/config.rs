use crate::kv::{ConfigError, KvSection};

use super::reward::RewardMode;

/// Physical and episodic parameters of the planar quadruped.
///
/// Lengths in meters, masses in kilograms, torques in newton-meters. The
/// defaults describe a 1.5 kg desk-scale robot with a 0.4 m torso and
/// 0.12 m leg segments.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Control period in seconds.
    pub dt: f64,
    pub substeps: usize,
    pub gravity: f64,
    pub max_torque: f64,

    pub torso_length: f64,
    pub torso_mass: f64,
    /// Horizontal distance of the front and rear hips from the torso center.
    pub hip_offset: f64,
    pub thigh_length: f64,
    pub thigh_mass: f64,
    pub shank_length: f64,
    pub shank_mass: f64,
    /// Reflected rotor inertia added to every joint.
    pub armature: f64,
    pub joint_damping: f64,
    /// Passive spring pulling each joint toward the standing pose.
    pub joint_stiffness: f64,
    pub hip_limit: f64,
    pub knee_limit: f64,
    pub stand_hip: f64,
    pub stand_knee: f64,

    pub ground_stiffness: f64,
    pub ground_damping: f64,
    pub tangential_stiffness: f64,
    pub tangential_damping: f64,
    pub friction: f64,

    /// Healthy torso height band; leaving it counts as falling.
    pub healthy_z_min: f64,
    pub healthy_z_max: f64,
    pub reset_noise: f64,
    /// Gap between the feet and the ground in the reset pose.
    pub reset_clearance: f64,
    pub horizon: usize,
    pub reward_mode: RewardMode,
}

impl Default for SimConfig {
    fn default() -> Self {
        let mut cfg = Self {
            dt: 0.01,
            substeps: 4,
            gravity: 9.81,
            max_torque: 1.0,
            torso_length: 0.4,
            torso_mass: 1.0,
            hip_offset: 0.15,
            thigh_length: 0.12,
            thigh_mass: 0.08,
            shank_length: 0.12,
            shank_mass: 0.05,
            armature: 0.002,
            joint_damping: 0.02,
            joint_stiffness: 1.0,
            hip_limit: 1.2,
            knee_limit: 2.0,
            stand_hip: 0.5,
            stand_knee: -1.0,
            ground_stiffness: 2000.0,
            ground_damping: 20.0,
            tangential_stiffness: 2000.0,
            tangential_damping: 20.0,
            friction: 0.8,
            healthy_z_min: 0.0,
            healthy_z_max: 0.0,
            reset_noise: 0.05,
            reset_clearance: 0.01,
            horizon: 500,
            reward_mode: RewardMode::Survival,
        };
        let h = cfg.standing_height();
        cfg.healthy_z_min = 0.3 * h;
        cfg.healthy_z_max = 1.5 * h;
        cfg
    }
}

impl SimConfig {
    /// Torso height of the canonical standing pose: feet `reset_clearance`
    /// above the ground.
    pub fn standing_height(&self) -> f64 {
        let thigh_angle = self.stand_hip;
        let shank_angle = self.stand_hip + self.stand_knee;
        self.thigh_length * thigh_angle.cos() + self.shank_length * shank_angle.cos() + self.reset_clearance
    }

    pub fn substep_dt(&self) -> f64 {
        self.dt / self.substeps as f64
    }

    pub fn total_mass(&self) -> f64 {
        self.torso_mass + 4.0 * (self.thigh_mass + self.shank_mass)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("dt", self.dt),
            ("max_torque", self.max_torque),
            ("torso_length", self.torso_length),
            ("torso_mass", self.torso_mass),
            ("thigh_length", self.thigh_length),
            ("thigh_mass", self.thigh_mass),
            ("shank_length", self.shank_length),
            ("shank_mass", self.shank_mass),
            ("hip_limit", self.hip_limit),
            ("knee_limit", self.knee_limit),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("gravity", self.gravity),
            ("armature", self.armature),
            ("joint_damping", self.joint_damping),
            ("joint_stiffness", self.joint_stiffness),
            ("ground_stiffness", self.ground_stiffness),
            ("ground_damping", self.ground_damping),
            ("tangential_stiffness", self.tangential_stiffness),
            ("tangential_damping", self.tangential_damping),
            ("friction", self.friction),
            ("reset_noise", self.reset_noise),
            ("reset_clearance", self.reset_clearance),
        ];
        for (name, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(ConfigError::Invalid(format!("{name} must be non-negative, got {v}")));
            }
        }
        if self.substeps == 0 {
            return Err(ConfigError::Invalid("substeps must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(ConfigError::Invalid("horizon must be at least 1".into()));
        }
        if !(self.healthy_z_min < self.healthy_z_max) {
            return Err(ConfigError::Invalid(format!(
                "healthy_z_min {} must be below healthy_z_max {}",
                self.healthy_z_min, self.healthy_z_max
            )));
        }
        if self.hip_offset.abs() > self.torso_length / 2.0 {
            return Err(ConfigError::Invalid("hips must lie on the torso".into()));
        }
        if self.stand_hip.abs() > self.hip_limit || self.stand_knee.abs() > self.knee_limit {
            return Err(ConfigError::Invalid("standing pose violates joint limits".into()));
        }
        Ok(())
    }

    pub fn apply_section(&mut self, section: &KvSection) -> Result<(), ConfigError> {
        for (key, value) in section.entries() {
            macro_rules! set {
                ($field:ident) => {
                    self.$field = section.parse_value(key, value)?
                };
            }
            match key {
                "dt" => set!(dt),
                "substeps" => set!(substeps),
                "gravity" => set!(gravity),
                "max_torque" => set!(max_torque),
                "torso_length" => set!(torso_length),
                "torso_mass" => set!(torso_mass),
                "hip_offset" => set!(hip_offset),
                "thigh_length" => set!(thigh_length),
                "thigh_mass" => set!(thigh_mass),
                "shank_length" => set!(shank_length),
                "shank_mass" => set!(shank_mass),
                "armature" => set!(armature),
                "joint_damping" => set!(joint_damping),
                "joint_stiffness" => set!(joint_stiffness),
                "hip_limit" => set!(hip_limit),
                "knee_limit" => set!(knee_limit),
                "stand_hip" => set!(stand_hip),
                "stand_knee" => set!(stand_knee),
                "ground_stiffness" => set!(ground_stiffness),
                "ground_damping" => set!(ground_damping),
                "tangential_stiffness" => set!(tangential_stiffness),
                "tangential_damping" => set!(tangential_damping),
                "friction" => set!(friction),
                "healthy_z_min" => set!(healthy_z_min),
                "healthy_z_max" => set!(healthy_z_max),
                "reset_noise" => set!(reset_noise),
                "reset_clearance" => set!(reset_clearance),
                "horizon" => set!(horizon),
                "reward_mode" => set!(reward_mode),
                _ => return Err(section.unknown(key)),
            }
        }
        self.validate()
    }

    pub fn to_section(&self) -> KvSection {
        let mut s = KvSection::new("sim");
        s.set("dt", self.dt);
        s.set("substeps", self.substeps);
        s.set("gravity", self.gravity);
        s.set("max_torque", self.max_torque);
        s.set("torso_length", self.torso_length);
        s.set("torso_mass", self.torso_mass);
        s.set("hip_offset", self.hip_offset);
        s.set("thigh_length", self.thigh_length);
        s.set("thigh_mass", self.thigh_mass);
        s.set("shank_length", self.shank_length);
        s.set("shank_mass", self.shank_mass);
        s.set("armature", self.armature);
        s.set("joint_damping", self.joint_damping);
        s.set("joint_stiffness", self.joint_stiffness);
        s.set("hip_limit", self.hip_limit);
        s.set("knee_limit", self.knee_limit);
        s.set("stand_hip", self.stand_hip);
        s.set("stand_knee", self.stand_knee);
        s.set("ground_stiffness", self.ground_stiffness);
        s.set("ground_damping", self.ground_damping);
        s.set("tangential_stiffness", self.tangential_stiffness);
        s.set("tangential_damping", self.tangential_damping);
        s.set("friction", self.friction);
        s.set("healthy_z_min", self.healthy_z_min);
        s.set("healthy_z_max", self.healthy_z_max);
        s.set("reset_noise", self.reset_noise);
        s.set("reset_clearance", self.reset_clearance);
        s.set("horizon", self.horizon);
        s.set("reward_mode", self.reward_mode);
        s
    }
}
