//! Six-parameter triaxial gyroscope calibration from constant-speed
//! rotations.
//!
//! A reading `m` relates to the true rate `g` through `g = k (m + b)` per
//! axis. Rotating at a known speed `omega` makes `|g|^2 = omega^2` linear in
//! the squared and plain mean readings, so six rotations (one each way about
//! every axis) pin down all six parameters. [`estimator`] solves that
//! regression, [`protocol`] builds the rotation plan and turns logs into
//! observations, [`simulator`] produces synthetic sensors, and
//! [`evaluation`] runs Monte-Carlo campaigns over them.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod error;
pub mod estimator;
pub mod evaluation;
pub mod io;
pub mod model;
pub mod protocol;
pub mod simulator;

pub use error::{Error, Result};
pub use estimator::{solve, EstimationResult, Observation, ObservationSet, Solver, SolverConfig};
pub use model::{BetaVector, CalibrationParams, GyroSample, Vec3};
pub use protocol::{g_optimal_protocol, Axis, Direction, Protocol, ProtocolStep};
pub use simulator::SimConfig;
