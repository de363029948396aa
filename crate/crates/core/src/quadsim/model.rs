//! Reduced-coordinate dynamics of the planar quadruped.
//!
//! Generalized coordinates (11): torso `x`, `z`, `pitch`, then `hip, knee`
//! for legs 0..4. Every link angle is a linear combination of these, so the
//! angular Jacobians are constant and the equations of motion reduce to
//!
//! `M(q) qdd = sum_i J_i^T (m_i g - m_i Jdot_i qd) + tau + sum_c J_c^T f_c`
//!
//! with `M = sum_i m_i J_i^T J_i + I_i w_i^T w_i + armature`.
//! Ground contact is a penalty spring-damper at each contact point with a
//! stick/slip tangential anchor clamped by Coulomb friction.

use nalgebra::{SMatrix, SVector};

use super::config::SimConfig;
use crate::failure::NUM_LEGS;

pub const NDOF: usize = 3 + 2 * NUM_LEGS;
/// Feet 0..4, knees 4..8, torso nose 8, torso tail 9.
pub const NUM_CONTACTS: usize = 2 * NUM_LEGS + 2;

pub const X: usize = 0;
pub const Z: usize = 1;
pub const PITCH: usize = 2;

pub fn hip_index(leg: usize) -> usize {
    3 + 2 * leg
}

pub fn knee_index(leg: usize) -> usize {
    4 + 2 * leg
}

/// Legs 0 and 1 hang from the front hip, 2 and 3 from the rear hip.
pub fn hip_x(cfg: &SimConfig, leg: usize) -> f64 {
    if leg < 2 {
        cfg.hip_offset
    } else {
        -cfg.hip_offset
    }
}

type Vec2 = [f64; 2];
pub type GenVec = [f64; NDOF];

fn rot(angle: f64, v: Vec2) -> Vec2 {
    let (s, c) = angle.sin_cos();
    [c * v[0] - s * v[1], s * v[0] + c * v[1]]
}

fn perp(r: Vec2) -> Vec2 {
    [-r[1], r[0]]
}

fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

fn scale(s: f64, a: Vec2) -> Vec2 {
    [s * a[0], s * a[1]]
}

/// Position, velocity and Jacobian of a point fixed on some link.
#[derive(Debug, Clone, Copy)]
pub struct PointKin {
    pub pos: Vec2,
    pub vel: Vec2,
    pub jac: [GenVec; 2],
    /// Acceleration of the point when `qdd = 0`.
    pub bias: Vec2,
}

/// One rotating segment of a kinematic chain: its current world vector,
/// absolute angular rate, and the coordinates its angle depends on.
struct Segment<'a> {
    r: Vec2,
    omega: f64,
    coords: &'a [usize],
}

fn chain_point(q: &GenVec, qd: &GenVec, segments: &[Segment]) -> PointKin {
    let mut pos = [q[X], q[Z]];
    let mut bias = [0.0; 2];
    let mut jac = [[0.0; NDOF]; 2];
    jac[0][X] = 1.0;
    jac[1][Z] = 1.0;
    for seg in segments {
        pos = add(pos, seg.r);
        bias = add(bias, scale(-seg.omega * seg.omega, seg.r));
        let p = perp(seg.r);
        for &c in seg.coords {
            jac[0][c] += p[0];
            jac[1][c] += p[1];
        }
    }
    let mut vel = [0.0; 2];
    for c in 0..NDOF {
        vel[0] += jac[0][c] * qd[c];
        vel[1] += jac[1][c] * qd[c];
    }
    PointKin { pos, vel, jac, bias }
}

struct LegFrame {
    hip: Vec2,
    thigh: Vec2,
    shank: Vec2,
    w_torso: f64,
    w_thigh: f64,
    w_shank: f64,
    torso_coords: [usize; 1],
    thigh_coords: [usize; 2],
    shank_coords: [usize; 3],
}

impl LegFrame {
    fn new(cfg: &SimConfig, q: &GenVec, qd: &GenVec, leg: usize) -> Self {
        let (hi, ki) = (hip_index(leg), knee_index(leg));
        let thigh_angle = q[PITCH] + q[hi];
        let shank_angle = thigh_angle + q[ki];
        Self {
            hip: rot(q[PITCH], [hip_x(cfg, leg), 0.0]),
            thigh: rot(thigh_angle, [0.0, -cfg.thigh_length]),
            shank: rot(shank_angle, [0.0, -cfg.shank_length]),
            w_torso: qd[PITCH],
            w_thigh: qd[PITCH] + qd[hi],
            w_shank: qd[PITCH] + qd[hi] + qd[ki],
            torso_coords: [PITCH],
            thigh_coords: [PITCH, hi],
            shank_coords: [PITCH, hi, ki],
        }
    }

    /// Point at fraction `a` along the thigh and `b` along the shank.
    fn point(&self, q: &GenVec, qd: &GenVec, a: f64, b: f64) -> PointKin {
        let segs = [
            Segment {
                r: self.hip,
                omega: self.w_torso,
                coords: &self.torso_coords,
            },
            Segment {
                r: scale(a, self.thigh),
                omega: self.w_thigh,
                coords: &self.thigh_coords,
            },
            Segment {
                r: scale(b, self.shank),
                omega: self.w_shank,
                coords: &self.shank_coords,
            },
        ];
        chain_point(q, qd, &segs)
    }
}

fn torso_point(q: &GenVec, qd: &GenVec, local_x: f64) -> PointKin {
    let seg = Segment {
        r: rot(q[PITCH], [local_x, 0.0]),
        omega: qd[PITCH],
        coords: &[PITCH],
    };
    chain_point(q, qd, &[seg])
}

pub fn contact_points(cfg: &SimConfig, q: &GenVec, qd: &GenVec) -> [PointKin; NUM_CONTACTS] {
    let half = cfg.torso_length / 2.0;
    let mut out = [torso_point(q, qd, half); NUM_CONTACTS];
    for leg in 0..NUM_LEGS {
        let frame = LegFrame::new(cfg, q, qd, leg);
        out[leg] = frame.point(q, qd, 1.0, 1.0);
        out[NUM_LEGS + leg] = frame.point(q, qd, 1.0, 0.0);
    }
    out[2 * NUM_LEGS + 1] = torso_point(q, qd, -half);
    out
}

struct Link {
    mass: f64,
    inertia: f64,
    com: PointKin,
    /// Coordinates whose sum is the link's absolute angle.
    angle_coords: Vec<usize>,
}

fn links(cfg: &SimConfig, q: &GenVec, qd: &GenVec) -> Vec<Link> {
    let mut out = Vec::with_capacity(1 + 2 * NUM_LEGS);
    out.push(Link {
        mass: cfg.torso_mass,
        inertia: cfg.torso_mass * cfg.torso_length * cfg.torso_length / 12.0,
        com: torso_point(q, qd, 0.0),
        angle_coords: vec![PITCH],
    });
    for leg in 0..NUM_LEGS {
        let frame = LegFrame::new(cfg, q, qd, leg);
        out.push(Link {
            mass: cfg.thigh_mass,
            inertia: cfg.thigh_mass * cfg.thigh_length * cfg.thigh_length / 12.0,
            com: frame.point(q, qd, 0.5, 0.0),
            angle_coords: frame.thigh_coords.to_vec(),
        });
        out.push(Link {
            mass: cfg.shank_mass,
            inertia: cfg.shank_mass * cfg.shank_length * cfg.shank_length / 12.0,
            com: frame.point(q, qd, 1.0, 0.5),
            angle_coords: frame.shank_coords.to_vec(),
        });
    }
    out
}

pub fn mass_matrix(cfg: &SimConfig, q: &GenVec, qd: &GenVec) -> SMatrix<f64, NDOF, NDOF> {
    let mut m = SMatrix::<f64, NDOF, NDOF>::zeros();
    for link in links(cfg, q, qd) {
        accumulate_link_mass(&mut m, &link);
    }
    for j in 3..NDOF {
        m[(j, j)] += cfg.armature;
    }
    m
}

fn accumulate_link_mass(m: &mut SMatrix<f64, NDOF, NDOF>, link: &Link) {
    let jac = &link.com.jac;
    for a in 0..NDOF {
        let (ja0, ja1) = (jac[0][a], jac[1][a]);
        if ja0 == 0.0 && ja1 == 0.0 {
            continue;
        }
        for b in 0..NDOF {
            m[(a, b)] += link.mass * (ja0 * jac[0][b] + ja1 * jac[1][b]);
        }
    }
    for &a in &link.angle_coords {
        for &b in &link.angle_coords {
            m[(a, b)] += link.inertia;
        }
    }
}

/// Tangential anchor of each contact point; `None` while airborne.
pub type Anchors = [Option<f64>; NUM_CONTACTS];

#[derive(Debug, Clone, Copy)]
pub struct ContactForce {
    pub normal: f64,
    pub tangential: f64,
}

fn contact_force(cfg: &SimConfig, p: &PointKin, anchor: &mut Option<f64>) -> ContactForce {
    let depth = -p.pos[1];
    if depth <= 0.0 {
        *anchor = None;
        return ContactForce {
            normal: 0.0,
            tangential: 0.0,
        };
    }
    let normal = (cfg.ground_stiffness * depth - cfg.ground_damping * p.vel[1]).max(0.0);
    let a = *anchor.get_or_insert(p.pos[0]);
    let stretch = p.pos[0] - a;
    let limit = cfg.friction * normal;
    let raw = -cfg.tangential_stiffness * stretch - cfg.tangential_damping * p.vel[0];
    let tangential = raw.clamp(-limit, limit);
    if raw != tangential && cfg.tangential_stiffness > 0.0 {
        // slipping: drag the anchor so the spring alone carries the friction limit
        *anchor = Some(p.pos[0] + tangential / cfg.tangential_stiffness);
    }
    ContactForce { normal, tangential }
}

/// Advances `(q, qd)` by one semi-implicit Euler substep and returns the
/// normal force at every contact point.
pub fn substep(
    cfg: &SimConfig,
    q: &mut GenVec,
    qd: &mut GenVec,
    anchors: &mut Anchors,
    joint_torques: &[f64; 2 * NUM_LEGS],
    stand_pose: &[f64; 2 * NUM_LEGS],
) -> [f64; NUM_CONTACTS] {
    let h = cfg.substep_dt();
    let mut mass = SMatrix::<f64, NDOF, NDOF>::zeros();
    let mut force = SVector::<f64, NDOF>::zeros();

    for link in links(cfg, q, qd) {
        accumulate_link_mass(&mut mass, &link);
        let acc = [-link.com.bias[0], -cfg.gravity - link.com.bias[1]];
        for c in 0..NDOF {
            force[c] += link.mass * (link.com.jac[0][c] * acc[0] + link.com.jac[1][c] * acc[1]);
        }
    }
    for j in 0..2 * NUM_LEGS {
        let c = 3 + j;
        mass[(c, c)] += cfg.armature;
        force[c] += joint_torques[j] - cfg.joint_stiffness * (q[c] - stand_pose[j]) - cfg.joint_damping * qd[c];
    }

    let points = contact_points(cfg, q, qd);
    let mut normals = [0.0; NUM_CONTACTS];
    for (i, p) in points.iter().enumerate() {
        let f = contact_force(cfg, p, &mut anchors[i]);
        normals[i] = f.normal;
        if f.normal == 0.0 && f.tangential == 0.0 {
            continue;
        }
        for c in 0..NDOF {
            force[c] += p.jac[0][c] * f.tangential + p.jac[1][c] * f.normal;
        }
    }

    let qdd = mass
        .cholesky()
        .map(|ch| ch.solve(&force))
        .unwrap_or_else(|| SVector::<f64, NDOF>::from_element(f64::NAN));

    for c in 0..NDOF {
        qd[c] += h * qdd[c];
        q[c] += h * qd[c];
    }
    for leg in 0..NUM_LEGS {
        clamp_joint(q, qd, hip_index(leg), cfg.hip_limit);
        clamp_joint(q, qd, knee_index(leg), cfg.knee_limit);
    }
    normals
}

fn clamp_joint(q: &mut GenVec, qd: &mut GenVec, c: usize, limit: f64) {
    if q[c] > limit {
        q[c] = limit;
        qd[c] = qd[c].min(0.0);
    } else if q[c] < -limit {
        q[c] = -limit;
        qd[c] = qd[c].max(0.0);
    }
}

/// Kinetic plus potential energy, including the energy stored in contact and
/// passive joint springs. Gravity potential is measured from `z = 0`.
pub fn mechanical_energy(cfg: &SimConfig, q: &GenVec, qd: &GenVec, anchors: &Anchors, stand_pose: &[f64; 2 * NUM_LEGS]) -> f64 {
    let m = mass_matrix(cfg, q, qd);
    let v = SVector::<f64, NDOF>::from_column_slice(qd);
    let kinetic = 0.5 * (v.transpose() * m * v)[(0, 0)];
    let gravity: f64 = links(cfg, q, qd)
        .iter()
        .map(|l| l.mass * cfg.gravity * l.com.pos[1])
        .sum();
    let mut springs = 0.0;
    for j in 0..2 * NUM_LEGS {
        let d = q[3 + j] - stand_pose[j];
        springs += 0.5 * cfg.joint_stiffness * d * d;
    }
    for (p, anchor) in contact_points(cfg, q, qd).iter().zip(anchors) {
        let depth = -p.pos[1];
        if depth > 0.0 {
            springs += 0.5 * cfg.ground_stiffness * depth * depth;
            if let Some(a) = anchor {
                let s = p.pos[0] - a;
                springs += 0.5 * cfg.tangential_stiffness * s * s;
            }
        }
    }
    kinetic + gravity + springs
}
