//! Multi-agent consensus under jamming attacks with randomized transmission times.
//!
//! Agents follow single-integrator dynamics driven by a ternary control input
//! that is refreshed at one random instant per time slot. An attacker can
//! block those refreshes, either on a fixed schedule or adaptively. The
//! [`engine`] simulates the closed loop exactly, [`verify`] checks the
//! resulting trajectories, and [`analysis`] covers the block-success bounds
//! and Monte Carlo statistics.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod attacks;
pub mod cli;
pub mod config;
pub mod control;
pub mod engine;
pub mod graph;
pub mod output;
pub mod parallel;
pub mod schedule;
pub mod verify;
