//! Simulation library for multi-principal apprenticeship learning.
//!
//! A robot observes one demonstration from each of several humans, fits a
//! single reward to the pooled demonstrations, and acts on it. This crate
//! models that pipeline and the incentives around it:
//!
//! - [`mdp`]: finite-horizon tabular MDPs, exact planning, occupancy measures.
//! - [`inference`]: maximum-entropy feature matching and the robot's plan.
//! - [`best_response`]: a strategic demonstrator's best response, solved as a
//!   concave program over the occupancy polytope.
//! - [`collegiality`]: honesty thresholds and exhaustive straightforwardness checks.
//! - [`plurality`]: manipulability of plurality voting on the utility simplex.
//! - [`collab`]: a score-based human-robot collaboration mechanism and its distortion.
//! - [`experiment`]: scenario files, the gridworld experiments and the β sweep.

pub mod best_response;
pub mod collab;
pub mod collegiality;
pub mod config;
pub mod error;
pub mod experiment;
pub mod gridworld;
pub mod inference;
pub mod mdp;
pub mod plurality;
pub mod util;

pub use error::{Error, Result};
