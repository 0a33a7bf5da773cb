//! Whole-body trajectory optimization through contact.
//!
//! Discovers motions and gaits for legged rigid-body systems with Sequential
//! Linear Quadratic optimal control over smooth spring-damper contact dynamics.
//! Contact sequences and timings emerge from cost minimization; nothing about
//! them is prescribed. A closed-loop tracking harness replays optimized
//! trajectories on perturbed simulation plants.

pub mod bench;
pub mod contact;
pub mod cost;
pub mod dynamics;
pub mod legged;
pub mod math;
pub mod rigid_body;
pub mod schedule;
pub mod slq;
pub mod task;
pub mod tracking;

pub use contact::{ContactParams, ContactState, GroundPlane};
pub use cost::CostSpec;
pub use dynamics::{
    AffinePolicy, ControlledSystem, IntegratorChoice, IntegratorMethod, Trajectory,
};
pub use legged::LeggedSystem;
pub use rigid_body::RigidBodyModel;
pub use slq::{SlqSolution, SolverSettings};
