//! Reduced-order bipedal walking on the multi-domain linear inverted pendulum
//! (MLIP): exact step-to-step dynamics, periodic orbits, step-placement gains,
//! a hybrid closed-loop simulator and reference trajectory generation.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod expm;
pub mod gains;
pub mod linalg;
pub mod model;
pub mod orbit;
pub mod rowmajor;
pub mod s2s;
pub mod sim;
pub mod traj;

pub use error::{Error, Result};
pub use model::{ContinuousState, Domain, GaitParams, ReducedState, WalkingMode};
pub use s2s::{compose_s2s, compose_s2s_at_fa_end, S2sDynamics, Section};
