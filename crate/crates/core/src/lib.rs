//! A line-search interior-point method for inequality-constrained
//! optimization that tolerates bounded, deterministic noise in every
//! function and derivative evaluation.
//!
//! The solver works on the slack-variable barrier reformulation of
//! `min f₀(x) s.t. c(x) ≤ 0` for a fixed barrier parameter, combining a
//! trust-region normal step for feasibility with a tangential step from an
//! inertia-corrected saddle-point solve, an adaptively weighted merit
//! function, and an Armijo backtracking test relaxed by the known noise
//! bounds. A continuation loop can drive the barrier parameter down once a
//! noise-aware trigger decides a subproblem is as solved as the noise allows.
//!
//! The crate also ships an embedded analytic problem suite and an experiment
//! harness that sweeps problems × barrier parameters × noise levels and
//! aggregates tail geometric means of the stationarity measures into
//! threshold profiles.

pub mod barrier;
pub mod error;
pub mod globalization;
pub mod harness;
pub mod linalg;
pub mod problem;
pub mod solver;
pub mod steps;
pub mod suite;

#[cfg(test)]
mod testrng;

pub use error::{Error, Result};
