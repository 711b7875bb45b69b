//! Simulation and analysis of the contact process on dynamically rewiring,
//! degree-penalised percolation graphs.

pub mod closedform;
pub mod engine;
pub mod error;
pub mod experiments;
pub mod graph;
pub mod kernels;
pub mod lyapunov;
pub mod oracle;
pub mod seed;

pub use error::{Error, Result};
