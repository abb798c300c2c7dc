//! Steady-state surrogate of a three-subloop liquid cooling plant and a
//! layered setpoint optimizer built on it.

// Negated comparisons are used on purpose so that NaN fails every range check.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod data;
pub mod physics;
pub mod report;
pub mod scalar;
pub mod solver;
pub mod stats;
pub mod strategies;
pub mod validate;

pub use physics::{OperatingRecord, SUBLOOPS};
pub use scalar::Scalar;

/// Plant parameters in double precision.
pub type Plant = physics::PlantParameters<f64>;
pub type Performance = physics::PerformanceOutput<f64>;
pub type Setpoint = strategies::ControlSetpoint<f64>;
