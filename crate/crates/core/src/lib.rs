//! Least squares on β-mixing data.
//!
//! Process simulators, exact and bounded mixing coefficients, the blocking
//! device, OLS diagnostics, every concentration and excess-risk bound used in
//! the analysis, and a seeded Monte Carlo harness that checks them.

pub mod blocking;
pub mod bounds;
pub mod cli;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod mixing;
pub mod process;
pub mod regression;
pub mod rng;

pub use error::{Error, Result};
