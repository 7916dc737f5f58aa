//! Quantum circuit Ising Born machines, simulated exactly and trained with
//! MMD, Stein-discrepancy and Sinkhorn-divergence costs.

pub mod bits;
pub mod compile;
pub mod config;
pub mod cost_mmd;
pub mod cost_sinkhorn;
pub mod cost_stein;
pub mod data;
pub mod error;
pub mod kernels;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod rng;
pub mod sim;
pub mod train;
pub mod verify;

pub use error::{Error, Result};
