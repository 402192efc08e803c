//! Distributed guidance of speed-limited agents through a trapezoid virtual
//! tube with disc obstacles.
//!
//! [`geometry`] builds tubes, [`potentials`] holds the barrier and panel
//! functions, [`controller`] turns them into velocity commands,
//! [`partition`] splits a tube around obstacles, [`simulator`] integrates a
//! swarm, and [`scenario`], [`export`] and [`cli`] handle files.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod controller;
pub mod export;
pub mod geometry;
pub mod partition;
pub mod potentials;
pub mod scenario;
pub mod simulator;
