//! Fault-tolerant quadruped locomotion laboratory.
//!
//! A planar quadruped simulator with actuator-failure injection, a PPO
//! learner written from scratch, the family of failure-coefficient
//! curricula (adaptive, linear, uniform, fixed and no randomization), the
//! training loop that wires them together, and an evaluation harness.

pub mod agent;
pub mod curriculum;
pub mod evalharness;
pub mod failure;
pub mod kv;
pub mod orchestrator;
pub mod quadsim;
pub mod rng;
