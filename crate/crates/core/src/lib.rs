//! Estimate-then-optimize versus integrated estimation-optimization.
//!
//! The crate fits both pipelines on parametric stochastic programs, evaluates
//! their population-level asymptotics and finite-sample bounds, and checks the
//! theory against seeded Monte Carlo regret experiments.

pub mod asymptotics;
pub mod cli;
pub mod config;
pub mod decision;
pub mod error;
pub mod estimators;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod quadrature;
pub mod rng;
pub mod special;
pub mod stats;

pub use error::{Error, Result};
