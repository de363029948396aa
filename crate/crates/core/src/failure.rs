//! Per-episode actuator failures: exactly one leg is broken and both of its
//! actuators output `k` times the commanded torque.

use rand::Rng as _;
use thiserror::Error;

use crate::rng::Rng;

pub const NUM_LEGS: usize = 4;
/// Largest failure coefficient any scheduler may hand out. Values above 1.0
/// model an overdriven actuator.
pub const K_MAX: f64 = 1.5;

#[derive(Debug, Error, PartialEq)]
pub enum FailureError {
    #[error("leg index {0} out of range 0..{NUM_LEGS}")]
    LegOutOfRange(usize),
    #[error("failure coefficient {0} outside [0, {K_MAX}]")]
    CoefficientOutOfRange(f64),
    #[error("empty sampling interval [{lower}, {upper}]")]
    EmptyInterval { lower: f64, upper: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FailureSpec {
    pub leg: usize,
    pub k: f64,
}

impl FailureSpec {
    pub fn new(leg: usize, k: f64) -> Result<Self, FailureError> {
        let spec = Self { leg, k };
        spec.validate()?;
        Ok(spec)
    }

    /// The identity failure: every actuator at nominal strength.
    pub fn nominal() -> Self {
        Self { leg: 0, k: 1.0 }
    }

    pub fn validate(&self) -> Result<(), FailureError> {
        if self.leg >= NUM_LEGS {
            return Err(FailureError::LegOutOfRange(self.leg));
        }
        if !self.k.is_finite() || !(0.0..=K_MAX).contains(&self.k) {
            return Err(FailureError::CoefficientOutOfRange(self.k));
        }
        Ok(())
    }

    /// Scales the broken leg's two actuators in place.
    pub fn apply(&self, torques: &mut [f64; 2 * NUM_LEGS]) {
        for idx in actuators_of_leg(self.leg) {
            torques[idx] *= self.k;
        }
    }
}

/// Leg `l` owns actuators `2l` (hip) and `2l + 1` (knee).
pub fn actuators_of_leg(leg: usize) -> [usize; 2] {
    [2 * leg, 2 * leg + 1]
}

pub fn sample_leg(rng: &mut Rng) -> usize {
    rng.random_range(0..NUM_LEGS)
}

/// Draws `k ~ Uni(lower, upper)`; a degenerate interval returns `lower` exactly.
pub fn sample_k(rng: &mut Rng, lower: f64, upper: f64) -> Result<f64, FailureError> {
    if !(lower.is_finite() && upper.is_finite()) || lower > upper {
        return Err(FailureError::EmptyInterval { lower, upper });
    }
    if lower < 0.0 || upper > K_MAX {
        return Err(FailureError::CoefficientOutOfRange(if lower < 0.0 { lower } else { upper }));
    }
    if lower == upper {
        return Ok(lower);
    }
    Ok(rng.random_range(lower..=upper))
}

/// Leg first, then k, from the same stream.
pub fn sample_failure(rng: &mut Rng, lower: f64, upper: f64) -> Result<FailureSpec, FailureError> {
    let leg = sample_leg(rng);
    let k = sample_k(rng, lower, upper)?;
    Ok(FailureSpec { leg, k })
}
