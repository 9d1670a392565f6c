//! Simulator and optimiser for RIS-assisted, UAV-served uplink NOMA cells.
//!
//! - [`geometry`]: topology, band parameters, distances, angles, ToA.
//! - [`channel`]: stochastic multipath channel synthesis.
//! - [`ris`]: reflection phases and cascaded-channel gains.
//! - [`game`]: leader/follower power-control game and Nash checks.
//! - [`slice`]: TTI-level eMBB/URLLC slice scheduler.
//! - [`config`], [`scenario`], [`presets`]: experiment files and campaigns.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod config;
pub mod error;
pub mod game;
pub mod geometry;
pub mod presets;
pub mod ris;
pub mod rng;
pub mod scenario;
pub mod slice;
pub mod units;

pub use error::{Error, Result};
